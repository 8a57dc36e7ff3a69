#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stein/tensor.hpp"

namespace stein::spectral {

using FreqIndex = std::pair<int, int>;  // (u, v), vertical then horizontal

/// Orthonormal 2-D DCT basis kernel for frequency (u, v) on a p x p grid.
/// Entry at spatial (x, y) is a_u * a_v * cos(pi*(2x+1)*u / 2p) * cos(pi*(2y+1)*v / 2p)
/// with a_0 = 1/sqrt(p) and a_k = sqrt(2/p) otherwise.
struct DctBasis {
    int p = 0;
    int u = 0;
    int v = 0;
    std::vector<double> kernel;  // p*p, row-major

    double at(int x, int y) const { return kernel[x * p + y]; }
};

DctBasis dct_basis(int p, int u, int v);

/// Forward 2-D DCT of an H x W tensor (analysis utility; no gradient graph).
Tensor dct2(const Tensor& spatial);

/// Inverse 2-D DCT; exact inverse of dct2.
Tensor idct2(const Tensor& spectrum);

enum class FrequencyStrategy {
    kPretrainedPriors,
    kRandomSelection,
    kDynamicAssignment,
};

std::string strategy_name(FrequencyStrategy s);
FrequencyStrategy strategy_from_name(const std::string& name);

/// Ordered list of selected DCT frequencies plus the strategy that produced it.
struct FrequencySpec {
    FrequencyStrategy strategy = FrequencyStrategy::kPretrainedPriors;
    int p = 7;
    std::vector<FreqIndex> indices;
    std::optional<uint64_t> seed;

    void validate() const;
};

/// Diagonal-scan order over a p x p frequency grid starting at DC, the
/// deterministic fallback priority list.
std::vector<FreqIndex> zigzag_order(int p);

/// Built-in 7x7 frequency importance ranking (16 entries, DC first).
const std::vector<FreqIndex>& builtin_priority_list();

/// Parses a priority list file of "u v" rows, highest priority first.
std::vector<FreqIndex> load_priority_list(const std::string& path, int p);

/**
 * Frequency selection.
 *  - pretrained_priors: first M entries of the priority list (built-in unless
 *    `priority` is supplied), extended in zigzag order when the list is short.
 *  - random_selection: (0,0) plus M-1 distinct uniform draws under `seed`.
 *  - dynamic_assignment: M highest-weight cells of `importance` (p*p,
 *    row-major), ties broken by (u,v) lexicographic order.
 */
FrequencySpec select_frequencies(FrequencyStrategy strategy, int m, int p,
                                 std::optional<uint64_t> seed = std::nullopt,
                                 const std::vector<double>* importance = nullptr,
                                 const std::vector<FreqIndex>* priority = nullptr);

}  // namespace stein::spectral
