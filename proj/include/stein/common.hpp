#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace stein {

// Error taxonomy. The CLI maps these onto its exit codes
// (configuration 2, data 3, numeric 4); everything else is generic.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ShapeError : ConfigError {
    explicit ShapeError(const std::string& msg) : ConfigError(msg) {}
};
struct UsageError : ConfigError {
    explicit UsageError(const std::string& msg) : ConfigError(msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Deterministic RNG. Draw helpers are hand-rolled so that streams do not
/// depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    uint64_t uniform_u64(uint64_t n);

    int uniform_int(int lo, int hi);  // inclusive bounds

    /// Uniform double in [0, 1).
    double uniform_real();

    double uniform_real(double lo, double hi);

    /// Standard normal via Box-Muller (one value per call, cached pair).
    double normal();

    /// Normal(0, std) resampled until |z| <= 2*std.
    double truncated_normal(double stddev);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_u64(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace stein
