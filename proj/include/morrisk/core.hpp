#pragma once

// Shared aliases, error types and small numeric utilities used across the
// library. Everything here is dependency-light: Eigen plus the standard
// library.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace morrisk {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Error taxonomy. All library failures derive from morrisk::error so callers
// can catch one type at the CLI boundary.
// ---------------------------------------------------------------------------

class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (CSV/JSON); message names the offending row/column.
class parse_error : public error {
public:
    using error::error;
};

/// Structurally valid input violating a domain invariant.
class validation_error : public error {
public:
    using error::error;
};

/// Segment-wise curve fit failed to converge.
class calibration_error : public error {
public:
    using error::error;
};

/// Linear solve failed (singular or numerically broken system).
class solver_error : public error {
public:
    using error::error;
};

/// Instrument event date not representable on the time grid.
class schedule_error : public error {
public:
    using error::error;
};

/// Iterative procedure exhausted its budget without meeting tolerance.
class convergence_error : public error {
public:
    using error::error;
};

// ---------------------------------------------------------------------------
// Basic statistics
// ---------------------------------------------------------------------------

inline double mean(const std::vector<double>& x) {
    if (x.empty()) throw validation_error("mean of empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

/// Population variance (divides by n).
inline double variance(const std::vector<double>& x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

/// Sample variance (divides by n-1).
inline double sample_variance(const std::vector<double>& x) {
    if (x.size() < 2) throw validation_error("sample variance needs n >= 2");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

// ---------------------------------------------------------------------------
// Random matrices
// ---------------------------------------------------------------------------

inline Vec gaussian_vector(Eigen::Index n, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
    return v;
}

inline Mat gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
}

// ---------------------------------------------------------------------------
// Bracketed scalar root finding (Brent). Used by the curve calibration and by
// test oracles.
// ---------------------------------------------------------------------------

struct RootOptions {
    double x_tol = 1e-14;
    double f_tol = 0.0;   // absolute tolerance on |f(x)|; 0 disables
    int max_iter = 200;
};

inline double brent_root(const std::function<double(double)>& f, double a, double b,
                         const RootOptions& opt = {}) {
    double fa = f(a);
    double fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0) throw convergence_error("brent_root: endpoints do not bracket a root");

    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int it = 0; it < opt.max_iter; ++it) {
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * opt.x_tol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol || fb == 0.0) return b;
        if (opt.f_tol > 0.0 && std::abs(fb) <= opt.f_tol) return b;
        if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
            // inverse quadratic / secant step
            const double s = fb / fa;
            double p, q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                const double qq = fa / fc;
                const double r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::abs(d) > tol) ? d : (xm > 0.0 ? tol : -tol);
        fb = f(b);
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a; fc = fa;
            d = b - a; e = d;
        }
    }
    throw convergence_error("brent_root: iteration limit reached");
}

/// Expands [lo, hi] geometrically around the seed interval until f changes
/// sign, then runs Brent.
inline double bracketed_root(const std::function<double(double)>& f, double lo, double hi,
                             const RootOptions& opt = {}, int max_expand = 60) {
    double flo = f(lo), fhi = f(hi);
    double width = hi - lo;
    for (int i = 0; i < max_expand && flo * fhi > 0.0; ++i) {
        width *= 1.7;
        if (std::abs(flo) < std::abs(fhi)) {
            lo -= width;
            flo = f(lo);
        } else {
            hi += width;
            fhi = f(hi);
        }
    }
    if (flo * fhi > 0.0) throw convergence_error("bracketed_root: failed to bracket a sign change");
    return brent_root(f, lo, hi, opt);
}

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature on [a, b]
// ---------------------------------------------------------------------------

struct Quadrature {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

/// Nodes/weights via Newton iteration on the Legendre polynomial.
inline const Quadrature& gauss_legendre(int n) {
    static thread_local std::vector<std::pair<int, Quadrature>> cache;
    for (auto& [k, q] : cache)
        if (k == n) return q;

    Quadrature q;
    q.nodes.resize(n);
    q.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        q.nodes[i] = -x;
        q.nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        q.weights[i] = w;
        q.weights[n - 1 - i] = w;
    }
    cache.emplace_back(n, std::move(q));
    return cache.back().second;
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        int points_per_panel = 16, double max_panel = 2.0) {
    if (b <= a) return 0.0;
    const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / max_panel)));
    const auto& q = gauss_legendre(points_per_panel);
    const double dp = (b - a) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * dp;
        const double mid = lo + 0.5 * dp;
        const double half = 0.5 * dp;
        for (int i = 0; i < points_per_panel; ++i)
            total += q.weights[i] * f(mid + half * q.nodes[i]);
    }
    return total * 0.5 * dp;
}

// ---------------------------------------------------------------------------
// Minimal parallel fan-out. Results must be written into preallocated slots
// indexed by the loop variable so the output is independent of scheduling.
// ---------------------------------------------------------------------------

inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const int workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex err_mutex;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n || failed.load()) return;
                try {
                    body(i);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!failed.exchange(true)) first_error = e.what();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed.load()) throw error("parallel task failed: " + first_error);
}

}  // namespace morrisk
