#include "stein/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stein/dct.hpp"

namespace stein::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (lr <= 0.0) throw ConfigError("TrainConfig: lr must be positive");
    if (lr_gamma <= 0.0 || lr_gamma > 1.0)
        throw ConfigError("TrainConfig: lr_gamma must lie in (0, 1]");
    if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
    if (max_steps < 0) throw ConfigError("TrainConfig: max_steps must be >= 0");
}

std::string TrainState::to_json() const {
    json j;
    j["step"] = step;
    j["epoch"] = epoch;
    j["lr"] = lr;
    j["rng_seed"] = rng_seed;
    j["best_val_f1"] = best_val_f1;
    return j.dump(2);
}

TrainState TrainState::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open train state '" + path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("train state '" + path + "' is not valid JSON");
    TrainState s;
    s.step = j.value("step", int64_t{0});
    s.epoch = j.value("epoch", 0);
    s.lr = j.value("lr", 0.0);
    s.rng_seed = j.value("rng_seed", uint64_t{0});
    s.best_val_f1 = j.value("best_val_f1", 0.0);
    return s;
}

void make_batch(const std::vector<BitemporalSample>& data, const std::vector<size_t>& indices,
                Tensor& t1, Tensor& t2, Tensor& labels) {
    if (indices.empty()) throw UsageError("make_batch: empty index list");
    const int64_t h = data[indices[0]].height, w = data[indices[0]].width;
    const int64_t n = static_cast<int64_t>(indices.size());
    std::vector<double> d1(static_cast<size_t>(n) * 3 * h * w);
    std::vector<double> d2(d1.size());
    std::vector<double> dl(static_cast<size_t>(n) * h * w);
    for (int64_t b = 0; b < n; ++b) {
        const auto& s = data[indices[b]];
        if (s.height != h || s.width != w)
            throw DataError("make_batch: sample '" + s.id + "' size differs within batch");
        std::copy(s.t1.data().begin(), s.t1.data().end(), d1.begin() + b * 3 * h * w);
        std::copy(s.t2.data().begin(), s.t2.data().end(), d2.begin() + b * 3 * h * w);
        for (int64_t i = 0; i < h * w; ++i) dl[b * h * w + i] = s.label[i];
    }
    t1 = Tensor::from_data({n, 3, h, w}, std::move(d1));
    t2 = Tensor::from_data({n, 3, h, w}, std::move(d2));
    labels = Tensor::from_data({n, 1, h, w}, std::move(dl));
}

std::vector<uint8_t> predict_mask(model::SteinFormer& m, const BitemporalSample& s) {
    NoGradGuard inference;
    Tensor t1, t2, labels;
    make_batch({s}, {0}, t1, t2, labels);
    auto out = m.forward(t1, t2, nn::Mode::eval());
    const auto& d = out.logits.data();
    const int64_t hw = static_cast<int64_t>(s.height) * s.width;
    std::vector<uint8_t> mask(hw);
    for (int64_t i = 0; i < hw; ++i) mask[i] = d[hw + i] > d[i] ? 1 : 0;
    return mask;
}

MetricsReport evaluate_model(model::SteinFormer& m, const std::vector<BitemporalSample>& data) {
    std::vector<std::vector<uint8_t>> preds, labels;
    preds.reserve(data.size());
    labels.reserve(data.size());
    for (const auto& s : data) {
        preds.push_back(predict_mask(m, s));
        labels.push_back(s.label);
    }
    return evaluate_metrics(preds, labels);
}

namespace {

std::vector<model::WeightEntry> adam_entries(const model::SteinFormer& m,
                                             const AdamOptimizer& opt,
                                             const std::vector<nn::NamedParam>& params) {
    (void)m;
    std::vector<model::WeightEntry> extra;
    for (size_t i = 0; i < params.size(); ++i) {
        extra.push_back({"adam.m." + params[i].name, params[i].tensor.shape(),
                         opt.first_moments()[i]});
        extra.push_back({"adam.v." + params[i].name, params[i].tensor.shape(),
                         opt.second_moments()[i]});
    }
    return extra;
}

}  // namespace

TrainResult train_loop(model::SteinFormer& m, const model::LossConfig& loss_cfg,
                       const std::vector<BitemporalSample>& train_data,
                       const std::vector<BitemporalSample>& val_data, const TrainConfig& cfg) {
    cfg.validate();
    loss_cfg.validate();
    if (train_data.empty()) throw DataError("train_loop: no training samples");

    const bool persist = !cfg.out_dir.empty();
    std::ofstream log;
    TrainResult result;
    if (persist) {
        fs::create_directories(cfg.out_dir);
        result.log_path = (fs::path(cfg.out_dir) / "train_log.csv").string();
        result.best_path = (fs::path(cfg.out_dir) / "best.stein").string();
        result.last_path = (fs::path(cfg.out_dir) / "last.stein").string();
        log.open(result.log_path);
        if (!log) throw DataError("cannot open log '" + result.log_path + "'");
        log << "step,epoch,lr,loss,focal,dice,val_f1\n";
        log.precision(12);
    }

    AdamConfig acfg;
    acfg.lr = cfg.lr;
    acfg.weight_decay = cfg.weight_decay;
    AdamOptimizer opt(&m.parameters(), acfg);

    TrainState state;
    state.rng_seed = cfg.seed;
    state.lr = cfg.lr;
    double best_f1 = -1.0;
    bool stop = false;

    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        state.epoch = epoch;
        state.lr = cfg.lr * std::pow(cfg.lr_gamma, epoch);
        opt.set_lr(state.lr);

        std::vector<size_t> order(train_data.size());
        std::iota(order.begin(), order.end(), size_t{0});
        Rng shuffle_rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        for (size_t start = 0; start < order.size() && !stop;
             start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<BitemporalSample> batch_samples;
            std::vector<size_t> batch_idx;
            for (size_t i = start; i < end; ++i) {
                const auto& s = train_data[order[i]];
                if (cfg.augment) {
                    const uint64_t aseed = cfg.seed * 0x100000001b3ULL +
                                           static_cast<uint64_t>(epoch) * 1000003ULL +
                                           static_cast<uint64_t>(order[i]) * 31ULL + 7ULL;
                    batch_samples.push_back(augment(s, aseed));
                } else {
                    batch_samples.push_back(s);
                }
                batch_idx.push_back(batch_samples.size() - 1);
            }

            Tensor t1, t2, labels;
            make_batch(batch_samples, batch_idx, t1, t2, labels);

            auto out = m.forward(t1, t2, nn::Mode::train());
            Tensor focal = model::focal_loss(out.logits, labels, loss_cfg);
            Tensor dice = model::dice_loss(out.logits, labels, loss_cfg);
            Tensor loss = add(scale(focal, loss_cfg.lambda_focal),
                              scale(dice, loss_cfg.lambda_dice));
            const double loss_v = loss.item();
            if (!std::isfinite(loss_v))
                throw NumericError("non-finite loss at step " + std::to_string(state.step + 1) +
                                   " (epoch " + std::to_string(epoch) + ")");

            opt.zero_grad();
            backward(loss);
            opt.step();
            ++state.step;
            result.loss_history.push_back(loss_v);
            if (persist)
                log << state.step << "," << epoch << "," << state.lr << "," << loss_v << ","
                    << focal.item() << "," << dice.item() << ",\n";
            if (cfg.max_steps > 0 && state.step >= cfg.max_steps) stop = true;
        }

        if (!val_data.empty()) {
            const MetricsReport val = evaluate_model(m, val_data);
            result.final_val = val;
            const double f1 = val.f1;
            if (persist) {
                log << state.step << "," << epoch << "," << state.lr << ",,,," << f1 << "\n";
                log.flush();
            }
            if (f1 > best_f1) {
                best_f1 = f1;
                state.best_val_f1 = f1;
                if (persist) model::save_model(result.best_path, m);
            }
        }
    }

    if (persist) {
        model::save_model(result.last_path, m, adam_entries(m, opt, m.parameters()));
        std::ofstream st(result.last_path + ".state.json");
        st << state.to_json() << "\n";
        log.close();
    }
    result.state = state;
    return result;
}

std::vector<double> importance_from_dataset(const std::vector<BitemporalSample>& data, int p,
                                            uint64_t seed) {
    if (p <= 0) throw ConfigError("importance_from_dataset: p must be positive");
    if (data.empty()) throw UsageError("importance_from_dataset: empty dataset");

    std::vector<double> spectrum(static_cast<size_t>(p) * p, 0.0);
    int64_t patches = 0;
    const size_t sample_cap = std::min<size_t>(data.size(), 16);
    for (size_t si = 0; si < sample_cap; ++si) {
        const auto& s = data[si];
        for (const Tensor* frame : {&s.t1, &s.t2}) {
            const auto& d = frame->data();
            for (int c = 0; c < 3; ++c)
                for (int by = 0; by + p <= s.height; by += p)
                    for (int bx = 0; bx + p <= s.width; bx += p) {
                        std::vector<double> patch(static_cast<size_t>(p) * p);
                        for (int y = 0; y < p; ++y)
                            for (int x = 0; x < p; ++x)
                                patch[y * p + x] =
                                    d[(static_cast<size_t>(c) * s.height + by + y) * s.width +
                                      bx + x];
                        Tensor f = spectral::dct2(Tensor::from_data({p, p}, std::move(patch)));
                        for (int i = 0; i < p * p; ++i)
                            spectrum[i] += std::fabs(f.data()[i]);
                        ++patches;
                    }
        }
    }
    if (patches == 0) throw DataError("importance_from_dataset: images smaller than p");
    for (double& v : spectrum) v /= static_cast<double>(patches);
    const double mx = *std::max_element(spectrum.begin(), spectrum.end());
    if (mx > 0)
        for (double& v : spectrum) v /= mx;

    // seeded 3x3 scoring convolution + sigmoid over the mean spectrum
    Rng rng(seed);
    double k[9];
    for (double& v : k) v = rng.truncated_normal(0.5);
    std::vector<double> importance(static_cast<size_t>(p) * p);
    for (int u = 0; u < p; ++u)
        for (int v = 0; v < p; ++v) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = u + dy, xx = v + dx;
                    if (yy < 0 || yy >= p || xx < 0 || xx >= p) continue;
                    acc += k[(dy + 1) * 3 + (dx + 1)] * spectrum[yy * p + xx];
                }
            importance[u * p + v] = 1.0 / (1.0 + std::exp(-acc));
        }
    return importance;
}

void predict_export(model::SteinFormer& m, const BitemporalSample& s,
                    const std::string& out_prefix, bool has_label) {
    const std::vector<uint8_t> mask = predict_mask(m, s);
    write_png(out_prefix + "_pred.png", label_to_image(mask, s.height, s.width));
    if (has_label)
        write_png(out_prefix + "_error.png", error_map(mask, s.label, s.height, s.width));
}

}  // namespace stein::harness
