#include "stein/dct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace stein::spectral {

namespace {

// Rows of the 1-D orthonormal DCT matrix: T[k][s] = a_k cos(pi*(2s+1)*k / 2n).
std::vector<double> dct_matrix(int n) {
    std::vector<double> t(static_cast<size_t>(n) * n);
    const double a0 = 1.0 / std::sqrt(static_cast<double>(n));
    const double ak = std::sqrt(2.0 / static_cast<double>(n));
    for (int k = 0; k < n; ++k) {
        const double a = (k == 0) ? a0 : ak;
        for (int s = 0; s < n; ++s)
            t[k * n + s] = a * std::cos(M_PI * (2.0 * s + 1.0) * k / (2.0 * n));
    }
    return t;
}

void require_hw(const Tensor& t, const char* op) {
    if (t.shape().size() != 2)
        throw ShapeError(std::string(op) + ": expected an HxW tensor, got " +
                         shape_str(t.shape()));
}

}  // namespace

DctBasis dct_basis(int p, int u, int v) {
    if (p <= 0) throw ConfigError("dct_basis: p must be positive");
    if (u < 0 || u >= p || v < 0 || v >= p)
        throw ConfigError("dct_basis: frequency (" + std::to_string(u) + ", " +
                          std::to_string(v) + ") out of range for p=" + std::to_string(p));
    DctBasis b;
    b.p = p;
    b.u = u;
    b.v = v;
    b.kernel.resize(static_cast<size_t>(p) * p);
    const double au = (u == 0) ? 1.0 / std::sqrt(static_cast<double>(p))
                               : std::sqrt(2.0 / static_cast<double>(p));
    const double av = (v == 0) ? 1.0 / std::sqrt(static_cast<double>(p))
                               : std::sqrt(2.0 / static_cast<double>(p));
    for (int x = 0; x < p; ++x)
        for (int y = 0; y < p; ++y)
            b.kernel[x * p + y] = au * av * std::cos(M_PI * (2.0 * x + 1.0) * u / (2.0 * p)) *
                                  std::cos(M_PI * (2.0 * y + 1.0) * v / (2.0 * p));
    return b;
}

Tensor dct2(const Tensor& spatial) {
    require_hw(spatial, "dct2");
    const int h = static_cast<int>(spatial.dim(0));
    const int w = static_cast<int>(spatial.dim(1));
    const auto th = dct_matrix(h);
    const auto tw = dct_matrix(w);
    const auto& a = spatial.data();

    // rows: tmp[u][y] = sum_x T_h[u][x] * A[x][y]
    std::vector<double> tmp(static_cast<size_t>(h) * w, 0.0);
    for (int u = 0; u < h; ++u)
        for (int x = 0; x < h; ++x) {
            const double t = th[u * h + x];
            for (int y = 0; y < w; ++y) tmp[u * w + y] += t * a[x * w + y];
        }
    // cols: f[u][v] = sum_y tmp[u][y] * T_w[v][y]
    std::vector<double> f(static_cast<size_t>(h) * w, 0.0);
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) {
            double acc = 0.0;
            for (int y = 0; y < w; ++y) acc += tmp[u * w + y] * tw[v * w + y];
            f[u * w + v] = acc;
        }
    return Tensor::from_data({h, w}, std::move(f));
}

Tensor idct2(const Tensor& spectrum) {
    require_hw(spectrum, "idct2");
    const int h = static_cast<int>(spectrum.dim(0));
    const int w = static_cast<int>(spectrum.dim(1));
    const auto th = dct_matrix(h);
    const auto tw = dct_matrix(w);
    const auto& f = spectrum.data();

    // rows: tmp[x][v] = sum_u T_h[u][x] * f[u][v]
    std::vector<double> tmp(static_cast<size_t>(h) * w, 0.0);
    for (int u = 0; u < h; ++u)
        for (int x = 0; x < h; ++x) {
            const double t = th[u * h + x];
            for (int v = 0; v < w; ++v) tmp[x * w + v] += t * f[u * w + v];
        }
    // cols: A[x][y] = sum_v tmp[x][v] * T_w[v][y]
    std::vector<double> a(static_cast<size_t>(h) * w, 0.0);
    for (int x = 0; x < h; ++x)
        for (int v = 0; v < w; ++v) {
            const double t = tmp[x * w + v];
            for (int y = 0; y < w; ++y) a[x * w + y] += t * tw[v * w + y];
        }
    return Tensor::from_data({h, w}, std::move(a));
}

std::string strategy_name(FrequencyStrategy s) {
    switch (s) {
        case FrequencyStrategy::kPretrainedPriors: return "pretrained_priors";
        case FrequencyStrategy::kRandomSelection: return "random_selection";
        case FrequencyStrategy::kDynamicAssignment: return "dynamic_assignment";
    }
    return "unknown";
}

FrequencyStrategy strategy_from_name(const std::string& name) {
    if (name == "pretrained_priors") return FrequencyStrategy::kPretrainedPriors;
    if (name == "random_selection") return FrequencyStrategy::kRandomSelection;
    if (name == "dynamic_assignment") return FrequencyStrategy::kDynamicAssignment;
    throw ConfigError("unknown frequency strategy '" + name + "'");
}

void FrequencySpec::validate() const {
    if (p <= 0) throw ConfigError("FrequencySpec: p must be positive");
    std::set<FreqIndex> seen;
    for (const auto& [u, v] : indices) {
        if (u < 0 || u >= p || v < 0 || v >= p)
            throw ConfigError("FrequencySpec: index (" + std::to_string(u) + ", " +
                              std::to_string(v) + ") out of range for p=" + std::to_string(p));
        if (!seen.insert({u, v}).second)
            throw ConfigError("FrequencySpec: duplicate index (" + std::to_string(u) + ", " +
                              std::to_string(v) + ")");
    }
}

std::vector<FreqIndex> zigzag_order(int p) {
    std::vector<FreqIndex> order;
    order.reserve(static_cast<size_t>(p) * p);
    for (int s = 0; s <= 2 * (p - 1); ++s) {
        if (s % 2 == 1) {
            for (int u = std::max(0, s - p + 1); u <= std::min(s, p - 1); ++u)
                order.emplace_back(u, s - u);
        } else {
            for (int u = std::min(s, p - 1); u >= std::max(0, s - p + 1); --u)
                order.emplace_back(u, s - u);
        }
    }
    return order;
}

const std::vector<FreqIndex>& builtin_priority_list() {
    // 7x7 grid importance ranking used by frequency-channel-attention models.
    static const std::vector<FreqIndex> list = {
        {0, 0}, {0, 1}, {6, 0}, {0, 5}, {0, 2}, {1, 0}, {1, 2}, {4, 0},
        {5, 0}, {1, 6}, {3, 0}, {0, 4}, {0, 6}, {0, 3}, {3, 5}, {2, 2},
    };
    return list;
}

std::vector<FreqIndex> load_priority_list(const std::string& path, int p) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open frequency priority list '" + path + "'");
    std::vector<FreqIndex> list;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        int u, v;
        if (line.empty() || line[0] == '#') continue;
        if (!(ls >> u >> v))
            throw DataError(path + ":" + std::to_string(line_no) + ": expected 'u v' row");
        if (u < 0 || u >= p || v < 0 || v >= p)
            throw DataError(path + ":" + std::to_string(line_no) + ": index (" +
                            std::to_string(u) + ", " + std::to_string(v) +
                            ") out of range for p=" + std::to_string(p));
        list.emplace_back(u, v);
    }
    if (list.empty()) throw DataError(path + ": empty priority list");
    return list;
}

FrequencySpec select_frequencies(FrequencyStrategy strategy, int m, int p,
                                 std::optional<uint64_t> seed,
                                 const std::vector<double>* importance,
                                 const std::vector<FreqIndex>* priority) {
    if (p <= 0) throw ConfigError("select_frequencies: p must be positive");
    if (m < 1 || m > p * p)
        throw ConfigError("select_frequencies: M=" + std::to_string(m) +
                          " outside [1, " + std::to_string(p * p) + "]");

    FrequencySpec spec;
    spec.strategy = strategy;
    spec.p = p;
    spec.seed = seed;

    switch (strategy) {
        case FrequencyStrategy::kPretrainedPriors: {
            std::vector<FreqIndex> base = priority ? *priority : builtin_priority_list();
            std::set<FreqIndex> used;
            for (const auto& idx : base) {
                if (static_cast<int>(spec.indices.size()) == m) break;
                if (idx.first < 0 || idx.first >= p || idx.second < 0 || idx.second >= p)
                    continue;  // list may target a larger grid
                if (used.insert(idx).second) spec.indices.push_back(idx);
            }
            for (const auto& idx : zigzag_order(p)) {
                if (static_cast<int>(spec.indices.size()) == m) break;
                if (used.insert(idx).second) spec.indices.push_back(idx);
            }
            break;
        }
        case FrequencyStrategy::kRandomSelection: {
            Rng rng(seed.value_or(0));
            spec.indices.emplace_back(0, 0);  // the lowest frequency is always kept
            std::set<FreqIndex> used = {{0, 0}};
            while (static_cast<int>(spec.indices.size()) < m) {
                const int cell = static_cast<int>(rng.uniform_u64(static_cast<uint64_t>(p) * p));
                const FreqIndex idx{cell / p, cell % p};
                if (used.insert(idx).second) spec.indices.push_back(idx);
            }
            break;
        }
        case FrequencyStrategy::kDynamicAssignment: {
            if (importance == nullptr)
                throw UsageError("select_frequencies: dynamic_assignment needs an importance map");
            if (static_cast<int>(importance->size()) != p * p)
                throw ConfigError("select_frequencies: importance map has " +
                                  std::to_string(importance->size()) + " entries, expected " +
                                  std::to_string(p * p));
            std::vector<FreqIndex> cells;
            cells.reserve(static_cast<size_t>(p) * p);
            for (int u = 0; u < p; ++u)
                for (int v = 0; v < p; ++v) cells.emplace_back(u, v);
            std::stable_sort(cells.begin(), cells.end(),
                             [&](const FreqIndex& a, const FreqIndex& b) {
                                 const double wa = (*importance)[a.first * p + a.second];
                                 const double wb = (*importance)[b.first * p + b.second];
                                 if (wa != wb) return wa > wb;
                                 return a < b;  // lexicographic tie break
                             });
            spec.indices.assign(cells.begin(), cells.begin() + m);
            break;
        }
    }
    spec.validate();
    return spec;
}

}  // namespace stein::spectral
