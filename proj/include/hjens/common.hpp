#pragma once

// Shared basics: error taxonomy, small dense linear algebra, quasi-random
// sampling. Everything in hjens is header-only.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hjens {

using Vec = std::vector<double>;
using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

// Configuration problems (bad input, inconsistent model data) are kept apart
// from numerical failures (blow-up, caustic, CFL) so the CLI can map them to
// distinct exit codes: 2 for configuration, 3 for numerics.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct format_error : config_error {
    int line;
    format_error(const std::string& msg, int line_number)
        : config_error(msg + " (line " + std::to_string(line_number) + ")"),
          line(line_number) {}
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct caustic_error : numeric_error {
    double t_caustic;
    explicit caustic_error(double t)
        : numeric_error("caustic: ensemble became multivalued at t=" +
                        std::to_string(t)),
          t_caustic(t) {}
};

struct domain_exit_error : numeric_error {
    double t_exit;
    explicit domain_exit_error(double t)
        : numeric_error("trajectory left the field domain at t=" +
                        std::to_string(t)),
          t_exit(t) {}
};

struct blowup_error : numeric_error {
    double t_last;   // time of the last finite state
    Vec q_last, p_last;
    int member = -1;  // ensemble member index, when applicable
    blowup_error(double t, Vec q, Vec p, int member_ = -1)
        : numeric_error("integration blow-up" +
                        (member_ >= 0 ? " (ensemble member " +
                                            std::to_string(member_) + ")"
                                      : std::string()) +
                        ": non-finite state after t=" + std::to_string(t)),
          t_last(t), q_last(std::move(q)), p_last(std::move(p)),
          member(member_) {}
};

struct cfl_error : numeric_error {
    std::int64_t node;
    double speed, limit;
    cfl_error(std::int64_t node_, double speed_, double limit_)
        : numeric_error("CFL violation at node " + std::to_string(node_) +
                        ": |v|*dt=" + std::to_string(speed_) +
                        " exceeds 0.5*min_h=" + std::to_string(limit_)),
          node(node_), speed(speed_), limit(limit_) {}
};

struct coverage_error : numeric_error {
    using numeric_error::numeric_error;
};

struct degeneracy_error : numeric_error {
    using numeric_error::numeric_error;
};

inline bool all_finite(ConstSpan v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double sup_norm(ConstSpan v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

// In-place Gaussian elimination with partial pivoting. a is n x n row-major,
// b is the right-hand side and receives the solution. Returns false when the
// pivot collapses (singular to working precision).
inline bool solve_linear(std::vector<double>& a, std::vector<double>& b, int n) {
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int i = k + 1; i < n; ++i)
            if (std::fabs(a[i * n + k]) > std::fabs(a[piv * n + k])) piv = i;
        if (std::fabs(a[piv * n + k]) < 1e-300) return false;
        if (piv != k) {
            for (int j = k; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
            std::swap(b[k], b[piv]);
        }
        for (int i = k + 1; i < n; ++i) {
            double f = a[i * n + k] / a[k * n + k];
            a[i * n + k] = 0;
            for (int j = k + 1; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
            b[i] -= f * b[k];
        }
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int j = i + 1; j < n; ++j) s -= a[i * n + j] * b[j];
        b[i] = s / a[i * n + i];
    }
    return true;
}

// Determinant by LU factorization; a is destroyed.
inline double determinant(std::vector<double>& a, int n) {
    double det = 1;
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int i = k + 1; i < n; ++i)
            if (std::fabs(a[i * n + k]) > std::fabs(a[piv * n + k])) piv = i;
        if (piv != k) {
            for (int j = k; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
            det = -det;
        }
        double p = a[k * n + k];
        if (p == 0) return 0;
        det *= p;
        for (int i = k + 1; i < n; ++i) {
            double f = a[i * n + k] / p;
            for (int j = k + 1; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
        }
    }
    return det;
}

// Halton low-discrepancy sequence, used by the model consistency audits so
// the sampled points are reproducible without a seed.
inline double halton(std::uint32_t index, std::uint32_t base) {
    double f = 1.0, r = 0.0;
    std::uint32_t i = index + 1;  // skip the origin
    while (i > 0) {
        f /= base;
        r += f * (i % base);
        i /= base;
    }
    return r;
}

inline void halton_point(std::uint32_t index, int dim, MutSpan out) {
    static const std::uint32_t primes[] = {2,  3,  5,  7,  11, 13, 17, 19,
                                           23, 29, 31, 37, 41, 43, 47, 53};
    for (int d = 0; d < dim; ++d)
        out[d] = halton(index, primes[d % 16]);
}

}  // namespace hjens
