#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stein/png_io.hpp"

namespace stein::harness {

/// Confusion counts over all pixels of all samples plus the derived scores.
/// A score whose denominator is zero is reported as 0 with its flag cleared.
struct MetricsReport {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double f1 = 0, precision = 0, recall = 0, iou = 0, oa = 0;
    bool precision_defined = true;
    bool recall_defined = true;
    bool f1_defined = true;
    bool iou_defined = true;

    static MetricsReport from_counts(int64_t tp, int64_t fp, int64_t fn, int64_t tn);
    int64_t total() const { return tp + fp + fn + tn; }
    std::string to_json() const;
};

/// Micro-averaged confusion over matched binary maps.
MetricsReport evaluate_metrics(const std::vector<std::vector<uint8_t>>& predictions,
                               const std::vector<std::vector<uint8_t>>& labels);

/// Four-color error visualization: white TP, black TN, red FP, green FN.
ImageU8 error_map(const std::vector<uint8_t>& prediction, const std::vector<uint8_t>& label,
                  int h, int w);

}  // namespace stein::harness
