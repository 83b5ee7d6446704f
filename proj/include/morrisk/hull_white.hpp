#pragma once

// Affine zero-coupon bond analytics for the two-factor short-rate model
//
//   dr = (theta(t) + u - alpha r) dt + sigma1 dW1
//   du = -b u dt + sigma2 dW2,          dW1 dW2 = gamma dt
//
// with constant alpha, b, sigma1, sigma2, gamma and piecewise-constant
// theta(t). Bond prices take the form
//
//   P(t, T) = exp( A(t,T) - B(T-t) r - C(T-t) u ),
//
// where B and C are the usual exponential loadings and A collects the theta
// drift (closed form per segment) and the variance convexity term (smooth,
// integrated by quadrature). These analytics back the curve calibration and
// the constant-maturity swap rates used in coupon fixing.

#include "morrisk/core.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace morrisk {

struct HullWhiteParams {
    double alpha = 0.75;
    double b = 0.04;
    double sigma1 = 0.0035;
    double sigma2 = 0.008;
    double gamma = 0.65;

    void validate() const {
        if (!(alpha > 0.0 && b > 0.0 && sigma1 > 0.0 && sigma2 > 0.0))
            throw validation_error("model constants alpha, b, sigma1, sigma2 must be positive");
        if (!(gamma >= -1.0 && gamma <= 1.0))
            throw validation_error("correlation gamma must lie in [-1, 1]");
    }
};

/// Loading of the bond price on the short rate: B(tau) = (1 - e^{-alpha tau}) / alpha.
inline double bond_loading_r(double alpha, double tau) {
    if (tau <= 0.0) return 0.0;
    return -std::expm1(-alpha * tau) / alpha;
}

/// Loading on the disturbance factor u. Solves C' = B - b C, C(0) = 0.
inline double bond_loading_u(double alpha, double b, double tau) {
    if (tau <= 0.0) return 0.0;
    const double scale = std::max(alpha, b);
    if (std::abs(b - alpha) < 1e-9 * scale) {
        // confluent limit b -> alpha
        return -std::expm1(-alpha * tau) / (alpha * alpha) - tau * std::exp(-alpha * tau) / alpha;
    }
    const double eb = -std::expm1(-b * tau);
    const double diff = std::exp(-alpha * tau) - std::exp(-b * tau);
    return (eb / b - diff / (b - alpha)) / alpha;
}

/// Convexity part of ln P(t,T):
/// integral over [t,T] of 1/2 s1^2 B^2 + 1/2 s2^2 C^2 + gamma s1 s2 B C.
inline double bond_variance_term(const HullWhiteParams& p, double t, double T) {
    if (T <= t) return 0.0;
    const auto f = [&](double s) {
        const double tau = T - s;
        const double B = bond_loading_r(p.alpha, tau);
        const double C = bond_loading_u(p.alpha, p.b, tau);
        return 0.5 * p.sigma1 * p.sigma1 * B * B + 0.5 * p.sigma2 * p.sigma2 * C * C +
               p.gamma * p.sigma1 * p.sigma2 * B * C;
    };
    return integrate(f, t, T, 16, 2.0);
}

/// Piecewise-constant function of time with breakpoints at the tenor grid.
/// Values extend flat beyond the last breakpoint.
struct PiecewiseConstant {
    std::vector<double> breakpoints;  // strictly increasing, > 0
    std::vector<double> values;       // values[i] holds on (breakpoints[i-1], breakpoints[i]]

    double at(double t) const {
        if (values.empty()) throw validation_error("piecewise-constant function has no segments");
        for (std::size_t i = 0; i < breakpoints.size(); ++i)
            if (t <= breakpoints[i]) return values[i];
        return values.back();
    }

    std::size_t segments() const { return values.size(); }
};

/// Closed-form integral over [t, T] of theta(s) * B(T - s) ds for piecewise
/// constant theta. The per-segment antiderivative only involves B.
inline double theta_drift_integral(const PiecewiseConstant& theta, double alpha, double t, double T) {
    if (T <= t) return 0.0;
    // antiderivative of B(T - s) in s: s/alpha - e^{-alpha (T - s)} / alpha^2
    const auto anti = [&](double s) {
        return s / alpha - std::exp(-alpha * (T - s)) / (alpha * alpha);
    };
    double total = 0.0;
    double lo = t;
    for (std::size_t i = 0; i < theta.breakpoints.size() && lo < T; ++i) {
        const double hi = std::min(theta.breakpoints[i], T);
        if (hi > lo) {
            total += theta.values[i] * (anti(hi) - anti(lo));
            lo = hi;
        }
    }
    if (lo < T)  // flat extension past the last breakpoint
        total += theta.values.back() * (anti(T) - anti(lo));
    return total;
}

/// State-independent pieces of ln P(t, T): P = exp(a - b r - c u). Computing
/// these once per (t, T) makes bond evaluation over a whole mesh cheap.
struct BondCoefficients {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;

    double price(double r, double u) const { return std::exp(a - b * r - c * u); }
};

inline BondCoefficients bond_coefficients(const HullWhiteParams& p, const PiecewiseConstant& theta,
                                          double t, double T) {
    if (T < t) throw validation_error("bond_coefficients: maturity precedes valuation time");
    BondCoefficients bc;
    if (T == t) return bc;
    const double tau = T - t;
    bc.b = bond_loading_r(p.alpha, tau);
    bc.c = bond_loading_u(p.alpha, p.b, tau);
    bc.a = -theta_drift_integral(theta, p.alpha, t, T) + bond_variance_term(p, t, T);
    return bc;
}

/// Zero-coupon bond price P(t, T) at state (r, u).
inline double zero_bond(const HullWhiteParams& p, const PiecewiseConstant& theta,
                        double t, double T, double r, double u) {
    return bond_coefficients(p, theta, t, T).price(r, u);
}

/// Annual-payment par swap rates evaluated from cached bond coefficients.
/// One instance serves a whole mesh sweep at a fixed evaluation time.
class CmsRateCache {
public:
    CmsRateCache(const HullWhiteParams& p, const PiecewiseConstant& theta, double t, int max_tenor) {
        if (max_tenor < 1) throw validation_error("CmsRateCache: tenor must be >= 1 year");
        coefs_.reserve(static_cast<std::size_t>(max_tenor));
        for (int i = 1; i <= max_tenor; ++i) coefs_.push_back(bond_coefficients(p, theta, t, t + i));
    }

    /// (1 - P(t, t+tenor)) / sum_{i<=tenor} P(t, t+i)
    double swap_rate(int tenor, double r, double u) const {
        double annuity = 0.0;
        double pn = 1.0;
        for (int i = 0; i < tenor; ++i) {
            pn = coefs_[static_cast<std::size_t>(i)].price(r, u);
            annuity += pn;
        }
        return (1.0 - pn) / annuity;
    }

private:
    std::vector<BondCoefficients> coefs_;
};

/// Par swap rate at time t for a swap of `tenor` years with annual fixed leg.
inline double cms_swap_rate(const HullWhiteParams& p, const PiecewiseConstant& theta,
                            double t, int tenor, double r, double u) {
    return CmsRateCache(p, theta, t, tenor).swap_rate(tenor, r, u);
}

/// Stationary covariance of (r, u) for the homogeneous part of the dynamics.
/// Used to size the truncated spatial domain.
struct StationaryMoments {
    double var_r = 0.0;
    double var_u = 0.0;
    double cov_ru = 0.0;
};

inline StationaryMoments stationary_moments(const HullWhiteParams& p) {
    StationaryMoments m;
    m.var_u = p.sigma2 * p.sigma2 / (2.0 * p.b);
    m.cov_ru = (m.var_u + p.gamma * p.sigma1 * p.sigma2) / (p.alpha + p.b);
    m.var_r = (m.cov_ru + 0.5 * p.sigma1 * p.sigma1) / p.alpha;
    return m;
}

}  // namespace morrisk
