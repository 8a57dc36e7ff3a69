#include "stein/common.hpp"

#include <cmath>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace stein {

#if defined(__GLIBC__)
namespace {
// Large activation buffers churn every step; keep them on the heap instead
// of handing pages back to the kernel each free.
struct MallocTuning {
    MallocTuning() {
        mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    }
};
const MallocTuning g_malloc_tuning;
}  // namespace
#endif

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

uint64_t Rng::uniform_u64(uint64_t n) {
    if (n == 0) throw UsageError("uniform_u64: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

int Rng::uniform_int(int lo, int hi) {
    if (hi < lo) throw UsageError("uniform_int: empty range");
    return lo + static_cast<int>(uniform_u64(static_cast<uint64_t>(hi - lo) + 1));
}

double Rng::uniform_real() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_real(double lo, double hi) {
    return lo + (hi - lo) * uniform_real();
}

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u1, u2;
    do {
        u1 = uniform_real();
    } while (u1 <= 0.0);
    u2 = uniform_real();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
}

double Rng::truncated_normal(double stddev) {
    for (;;) {
        const double z = normal();
        if (std::fabs(z) <= 2.0) return z * stddev;
    }
}

}  // namespace stein
