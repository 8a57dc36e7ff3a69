// Command-line front end: synthetic data generation, training, evaluation,
// prediction export, efficiency accounting and DCT self-checks.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numeric failure.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "stein/config.hpp"
#include "stein/dct.hpp"
#include "stein/metrics.hpp"
#include "stein/serialize.hpp"
#include "stein/synth.hpp"
#include "stein/train.hpp"

using namespace stein;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    int64_t seed = -1;  // -1 = keep config value
};

harness::RunConfig resolve_config(const CommonOpts& opts) {
    harness::RunConfig cfg;
    if (!opts.config_path.empty()) cfg = harness::load_config(opts.config_path);
    if (opts.seed >= 0) {
        cfg.train.seed = static_cast<uint64_t>(opts.seed);
        cfg.synth.seed = static_cast<uint64_t>(opts.seed);
        cfg.model.init_seed = static_cast<uint64_t>(opts.seed);
        cfg.model.frequency_seed = static_cast<uint64_t>(opts.seed);
    }
    return cfg;
}

std::vector<harness::BitemporalSample> resolve_data(const harness::RunConfig& cfg) {
    if (!cfg.data_root.empty()) return harness::load_dataset(cfg.data_root);
    return harness::synth_dataset(cfg.synth);
}

void write_or_print(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content;
        return;
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << content;
}

int cmd_synth(const CommonOpts& common, const std::string& out_dir) {
    harness::RunConfig cfg = resolve_config(common);
    auto samples = harness::synth_dataset(cfg.synth);
    harness::save_dataset(out_dir, samples);
    std::cout << "wrote " << samples.size() << " sample triples under " << out_dir
              << " (A/, B/, label/)\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& out_dir,
              const std::string& data_root, int epochs) {
    harness::RunConfig cfg = resolve_config(common);
    if (!out_dir.empty()) cfg.train.out_dir = out_dir;
    if (!data_root.empty()) cfg.data_root = data_root;
    if (epochs >= 0) cfg.train.epochs = epochs;
    if (cfg.train.out_dir.empty()) cfg.train.out_dir = "runs/default";

    auto data = resolve_data(cfg);
    if (static_cast<int>(data.size()) <= cfg.val_count)
        throw ConfigError("validation split of " + std::to_string(cfg.val_count) +
                          " leaves no training data (" + std::to_string(data.size()) +
                          " samples)");
    std::vector<harness::BitemporalSample> train_data(data.begin(),
                                                      data.end() - cfg.val_count);
    std::vector<harness::BitemporalSample> val_data(data.end() - cfg.val_count, data.end());

    model::SteinFormer net = harness::build_model(cfg, &train_data);
    auto result = harness::train_loop(net, cfg.loss, train_data, val_data, cfg.train);
    std::cout << "trained " << result.state.step << " steps; best val F1 "
              << result.state.best_val_f1 << "\n";
    std::cout << "checkpoints: " << result.best_path << ", " << result.last_path << "\n";
    std::cout << "log: " << result.log_path << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& checkpoint,
             const std::string& data_root) {
    harness::RunConfig cfg = resolve_config(common);
    if (!data_root.empty()) cfg.data_root = data_root;
    auto data = resolve_data(cfg);

    // checkpoints restore the frequency kernels, so the strategy used in
    // training does not matter here; avoid demanding an importance map
    if (cfg.model.frequency_strategy == spectral::FrequencyStrategy::kDynamicAssignment)
        cfg.model.importance.assign(static_cast<size_t>(cfg.model.mixer_p) * cfg.model.mixer_p,
                                    0.5);
    model::SteinFormer net = harness::build_model(cfg);
    model::load_model(checkpoint, net);
    auto report = harness::evaluate_model(net, data);
    std::cout << report.to_json() << "\n";
    return 0;
}

int cmd_predict(const CommonOpts& common, const std::string& checkpoint, const std::string& a,
                const std::string& b, const std::string& label, const std::string& out_prefix) {
    harness::RunConfig cfg = resolve_config(common);
    if (cfg.model.frequency_strategy == spectral::FrequencyStrategy::kDynamicAssignment)
        cfg.model.importance.assign(static_cast<size_t>(cfg.model.mixer_p) * cfg.model.mixer_p,
                                    0.5);
    model::SteinFormer net = harness::build_model(cfg);
    model::load_model(checkpoint, net);

    harness::BitemporalSample s;
    const harness::ImageU8 ia = harness::read_png(a);
    const harness::ImageU8 ib = harness::read_png(b);
    if (ia.width != ib.width || ia.height != ib.height)
        throw DataError("frame sizes differ: " + a + " vs " + b);
    s.width = ia.width;
    s.height = ia.height;
    s.id = "predict";
    s.t1 = harness::image_to_tensor(ia);
    s.t2 = harness::image_to_tensor(ib);
    s.label.assign(static_cast<size_t>(s.width) * s.height, 0);
    if (!label.empty()) {
        const harness::ImageU8 il = harness::read_png(label);
        if (il.width != s.width || il.height != s.height)
            throw DataError("label size differs from frames: " + label);
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x)
                s.label[static_cast<size_t>(y) * s.width + x] = il.at(y, x, 0) >= 128 ? 1 : 0;
    }
    harness::predict_export(net, s, out_prefix, !label.empty());
    std::cout << "wrote " << out_prefix << "_pred.png";
    if (!label.empty()) std::cout << " and " << out_prefix << "_error.png";
    std::cout << "\n";
    return 0;
}

int cmd_count_params(const CommonOpts& common, const std::string& csv_path) {
    harness::RunConfig cfg = resolve_config(common);
    model::SteinFormer net = harness::build_model(cfg);
    auto ledger = net.profile_pair(cfg.model.input_h, cfg.model.input_w);
    std::cout << "params " << net.param_count() << "\n";
    write_or_print(csv_path, ledger.to_csv());
    return 0;
}

int cmd_flops(const CommonOpts& common, int height, int width, const std::string& csv_path) {
    harness::RunConfig cfg = resolve_config(common);
    model::SteinFormer net = harness::build_model(cfg);
    const int h = height > 0 ? height : cfg.model.input_h;
    const int w = width > 0 ? width : cfg.model.input_w;
    auto ledger = net.profile_pair(h, w);
    std::cout << "flops " << ledger.total_flops() << " (input pair " << h << "x" << w
              << "x3; 1 MAC = 2 FLOPs; convolution and linear layers only, "
                 "normalizations/activations/resamplings excluded)\n";
    write_or_print(csv_path, ledger.to_csv());
    return 0;
}

int cmd_dct_check() {
    using namespace stein::spectral;
    bool all_ok = true;
    auto report = [&](const std::string& name, bool ok, double err) {
        all_ok = all_ok && ok;
        std::cout << (ok ? "PASS" : "FAIL") << " " << name << " (max err " << err << ")\n";
    };

    {
        const int p = 7;
        double worst = 0.0;
        std::vector<DctBasis> family;
        for (int u = 0; u < p; ++u)
            for (int v = 0; v < p; ++v) family.push_back(dct_basis(p, u, v));
        for (size_t i = 0; i < family.size(); ++i)
            for (size_t j = 0; j < family.size(); ++j) {
                double dot = 0.0;
                for (int k = 0; k < p * p; ++k)
                    dot += family[i].kernel[k] * family[j].kernel[k];
                worst = std::max(worst, std::fabs(dot - (i == j ? 1.0 : 0.0)));
            }
        report("basis orthonormality (49x49 Gram identity, p=7)", worst < 1e-9, worst);
    }
    {
        Rng rng(7);
        double worst_rt = 0.0, worst_energy = 0.0;
        for (int n : {2, 3, 4, 7, 8, 16}) {
            std::vector<double> img(static_cast<size_t>(n) * n);
            for (double& v : img) v = rng.uniform_real(-1.0, 1.0);
            Tensor a = Tensor::from_data({n, n}, img);
            Tensor f = dct2(a);
            Tensor back = idct2(f);
            double ea = 0.0, ef = 0.0;
            for (int i = 0; i < n * n; ++i) {
                worst_rt = std::max(worst_rt, std::fabs(back.data()[i] - a.data()[i]));
                ea += a.data()[i] * a.data()[i];
                ef += f.data()[i] * f.data()[i];
            }
            worst_energy = std::max(worst_energy, std::fabs(ea - ef));
        }
        report("transform round trip, sizes {2,3,4,7,8,16}", worst_rt < 1e-9, worst_rt);
        report("energy preservation", worst_energy < 1e-9, worst_energy);
    }
    {
        const int h = 5, w = 8;
        const double c = 2.5;
        Tensor f = dct2(Tensor::full({h, w}, c));
        double worst = std::fabs(f.data()[0] - c * std::sqrt(double(h * w)));
        for (int i = 1; i < h * w; ++i) worst = std::max(worst, std::fabs(f.data()[i]));
        report("constant image maps to a pure DC coefficient", worst < 1e-9, worst);
    }
    if (!all_ok) throw NumericError("DCT self-check failed");
    std::cout << "all DCT checks passed\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bi-temporal change detection: training, evaluation and analysis"};
    app.require_subcommand(1);

    CommonOpts common;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON config file");
        sub->add_option("--seed", common.seed, "override every seed in the config");
    };

    // synth
    std::string synth_out;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth);
    synth->add_option("--out", synth_out, "output dataset root")->required();

    // train
    std::string train_out, train_root;
    int train_epochs = -1;
    CLI::App* train = app.add_subcommand("train", "train a model");
    add_common(train);
    train->add_option("--out-dir", train_out, "checkpoint/log directory");
    train->add_option("--data-root", train_root, "dataset root (A/, B/, label/)");
    train->add_option("--epochs", train_epochs, "override epoch count");

    // eval
    std::string eval_ckpt, eval_root;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--checkpoint", eval_ckpt, "weights file")->required();
    eval->add_option("--data-root", eval_root, "dataset root");

    // predict
    std::string pr_ckpt, pr_a, pr_b, pr_label, pr_out;
    CLI::App* predict = app.add_subcommand("predict", "export a change map for one pair");
    add_common(predict);
    predict->add_option("--checkpoint", pr_ckpt, "weights file")->required();
    predict->add_option("--a", pr_a, "first frame PNG")->required();
    predict->add_option("--b", pr_b, "second frame PNG")->required();
    predict->add_option("--label", pr_label, "optional ground-truth PNG");
    predict->add_option("--out", pr_out, "output prefix")->required();

    // count-params
    std::string cp_csv;
    CLI::App* cp = app.add_subcommand("count-params", "exact learnable parameter count");
    add_common(cp);
    cp->add_option("--csv", cp_csv, "write the per-layer ledger to a file");

    // flops
    std::string fl_csv;
    int fl_h = 0, fl_w = 0;
    CLI::App* fl = app.add_subcommand("flops", "analytic FLOP count for a bi-temporal pair");
    add_common(fl);
    fl->add_option("--height", fl_h, "input height (default: config input size)");
    fl->add_option("--width", fl_w, "input width");
    fl->add_option("--csv", fl_csv, "write the per-layer ledger to a file");

    // dct-check
    CLI::App* dc = app.add_subcommand("dct-check", "verify the DCT machinery");
    add_common(dc);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(common, synth_out);
        if (train->parsed()) return cmd_train(common, train_out, train_root, train_epochs);
        if (eval->parsed()) return cmd_eval(common, eval_ckpt, eval_root);
        if (predict->parsed())
            return cmd_predict(common, pr_ckpt, pr_a, pr_b, pr_label, pr_out);
        if (cp->parsed()) return cmd_count_params(common, cp_csv);
        if (fl->parsed()) return cmd_flops(common, fl_h, fl_w, fl_csv);
        if (dc->parsed()) return cmd_dct_check();
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
