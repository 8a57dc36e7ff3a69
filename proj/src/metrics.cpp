#include "stein/metrics.hpp"

#include <sstream>

#include "stein/common.hpp"

namespace stein::harness {

MetricsReport MetricsReport::from_counts(int64_t tp, int64_t fp, int64_t fn, int64_t tn) {
    MetricsReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.tn = tn;
    if (tp + fp > 0)
        r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    else
        r.precision_defined = false;
    if (tp + fn > 0)
        r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    else
        r.recall_defined = false;
    if (r.precision + r.recall > 0.0 && r.precision_defined && r.recall_defined)
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    else
        r.f1_defined = false;
    if (tp + fp + fn > 0)
        r.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    else
        r.iou_defined = false;
    r.oa = r.total() > 0 ? static_cast<double>(tp + tn) / static_cast<double>(r.total()) : 0.0;
    return r;
}

std::string MetricsReport::to_json() const {
    std::ostringstream os;
    os.precision(10);
    os << "{\"tp\": " << tp << ", \"fp\": " << fp << ", \"fn\": " << fn << ", \"tn\": " << tn
       << ", \"f1\": " << f1 << ", \"precision\": " << precision << ", \"recall\": " << recall
       << ", \"iou\": " << iou << ", \"oa\": " << oa
       << ", \"degenerate\": " << ((precision_defined && recall_defined) ? "false" : "true")
       << "}";
    return os.str();
}

MetricsReport evaluate_metrics(const std::vector<std::vector<uint8_t>>& predictions,
                               const std::vector<std::vector<uint8_t>>& labels) {
    if (predictions.size() != labels.size())
        throw DataError("evaluate_metrics: " + std::to_string(predictions.size()) +
                        " predictions vs " + std::to_string(labels.size()) + " labels");
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t s = 0; s < predictions.size(); ++s) {
        const auto& p = predictions[s];
        const auto& l = labels[s];
        if (p.size() != l.size())
            throw DataError("evaluate_metrics: sample " + std::to_string(s) + " size mismatch");
        for (size_t i = 0; i < p.size(); ++i) {
            if (p[i] > 1 || l[i] > 1)
                throw DataError("evaluate_metrics: non-binary value in sample " +
                                std::to_string(s));
            if (p[i] && l[i])
                ++tp;
            else if (p[i] && !l[i])
                ++fp;
            else if (!p[i] && l[i])
                ++fn;
            else
                ++tn;
        }
    }
    return MetricsReport::from_counts(tp, fp, fn, tn);
}

ImageU8 error_map(const std::vector<uint8_t>& prediction, const std::vector<uint8_t>& label,
                  int h, int w) {
    if (prediction.size() != static_cast<size_t>(h) * w || prediction.size() != label.size())
        throw DataError("error_map: size mismatch");
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(3) * h * w);
    for (size_t i = 0; i < prediction.size(); ++i) {
        uint8_t r, g, b;
        if (prediction[i] && label[i]) {
            r = g = b = 255;  // true positive: white
        } else if (!prediction[i] && !label[i]) {
            r = g = b = 0;  // true negative: black
        } else if (prediction[i]) {
            r = 255; g = 0; b = 0;  // false positive: red
        } else {
            r = 0; g = 255; b = 0;  // false negative: green
        }
        img.pixels[i * 3] = r;
        img.pixels[i * 3 + 1] = g;
        img.pixels[i * 3 + 2] = b;
    }
    return img;
}

}  // namespace stein::harness
