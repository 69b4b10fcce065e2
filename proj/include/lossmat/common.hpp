#ifndef LOSSMAT_COMMON_HPP
#define LOSSMAT_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace lossmat {

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

// ---- counter-based RNG -------------------------------------------------
//
// Stateless hashing RNG: every draw is a pure function of a 64-bit key, so
// regeneration is independent of evaluation order.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t key_mix(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
inline std::uint64_t key_mix(std::uint64_t seed, std::uint64_t a, Rest... rest) {
    return key_mix(splitmix64(seed ^ (a + 0x9e3779b97f4a7c15ULL)), rest...);
}

// uniform in (0,1), never exactly 0 or 1
inline double counter_uniform(std::uint64_t key) {
    return (static_cast<double>(splitmix64(key) >> 11) + 0.5) * 0x1p-53;
}

// standard normal via Box-Muller on two hashed uniforms
inline double counter_normal(std::uint64_t key) {
    double u1 = counter_uniform(key_mix(key, 0));
    double u2 = counter_uniform(key_mix(key, 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// ---- dense Cholesky ----------------------------------------------------

// Lower-triangular Cholesky factor of a symmetric positive definite matrix
// stored row-major.  Used by the shared-covariance Gaussian rules.
struct Cholesky {
    int n = 0;
    std::vector<double> lower;  // row-major, upper part unused

    Cholesky() = default;

    explicit Cholesky(const std::vector<double>& a, int dim) : n(dim), lower(dim * dim, 0.0) {
        check(static_cast<int>(a.size()) == dim * dim, "cholesky: bad matrix size");
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j <= i; ++j) {
                double s = a[i * n + j];
                for (int k = 0; k < j; ++k) s -= lower[i * n + k] * lower[j * n + k];
                if (i == j) {
                    check(s > 0.0, "cholesky: matrix not positive definite");
                    lower[i * n + i] = std::sqrt(s);
                } else {
                    lower[i * n + j] = s / lower[j * n + j];
                }
            }
        }
    }

    // solve A x = b
    std::vector<double> solve(const std::vector<double>& b) const {
        check(static_cast<int>(b.size()) == n, "cholesky: bad rhs size");
        std::vector<double> y(n), x(n);
        for (int i = 0; i < n; ++i) {
            double s = b[i];
            for (int k = 0; k < i; ++k) s -= lower[i * n + k] * y[k];
            y[i] = s / lower[i * n + i];
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = y[i];
            for (int k = i + 1; k < n; ++k) s -= lower[k * n + i] * x[k];
            x[i] = s / lower[i * n + i];
        }
        return x;
    }

    double log_det() const {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += std::log(lower[i * n + i]);
        return 2.0 * s;
    }

    // y = L z, for sampling from N(mu, A)
    std::vector<double> apply_factor(const std::vector<double>& z) const {
        std::vector<double> y(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k <= i; ++k) y[i] += lower[i * n + k] * z[k];
        return y;
    }
};

// ---- numeric formatting ------------------------------------------------

// fixed 10 significant digits so emitted CSV/JSON bytes are stable
inline std::string fmt_g10(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// FNV-1a, used for config hashing
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace lossmat

#endif
