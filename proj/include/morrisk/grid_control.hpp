#pragma once

// Discretization-error control: automatic time-step selection against a
// first-order temporal error model, observed order of accuracy from three
// nested grids, Richardson error estimation, the grid convergence index, and
// the outer loop that refines the mesh until the estimated discretization
// error meets tolerance.

#include "morrisk/core.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace morrisk {

// ---------------------------------------------------------------------------
// Time step control
// ---------------------------------------------------------------------------

struct TimeStepIteration {
    double dt = 0.0;
    int K = 0;
    double dt_opt = 0.0;
};

struct TimeStepResult {
    double dt = 0.0;  // accepted step (before any key-date snapping)
    bool converged = false;
    bool solver_exact = false;  // reference and refined solves agreed exactly
    std::vector<TimeStepIteration> trace;
};

/// Shrinks the step until the first-order error estimate meets e_tol_t. The
/// callback returns the scalar output of a solve with the given step. The
/// loop halts once the estimated admissible step is at least as large as the
/// step in use; a solver whose output does not change with the step is
/// accepted at dt_max.
inline TimeStepResult optimal_time_step(const std::function<double(double)>& solve, double dt_max,
                                        double e_tol_t, int K0, int max_iter = 12) {
    if (!(dt_max > 0.0)) throw validation_error("optimal_time_step: dt_max must be positive");
    if (!(e_tol_t > 0.0)) throw validation_error("optimal_time_step: tolerance must be positive");
    if (K0 < 2) throw validation_error("optimal_time_step: K must be an integer >= 2");

    const double v_ref = solve(dt_max);
    if (!std::isfinite(v_ref)) throw solver_error("optimal_time_step: non-finite solver output");

    TimeStepResult result;
    int K = K0;
    double dt = dt_max;
    for (int it = 0; it < max_iter; ++it) {
        dt = dt_max / K;
        const double v = solve(dt);
        if (!std::isfinite(v)) throw solver_error("optimal_time_step: non-finite solver output");
        const double diff = std::abs(v - v_ref);
        if (diff == 0.0) {
            // step-size independent output: accept the largest step
            result.dt = dt_max;
            result.converged = true;
            result.solver_exact = true;
            result.trace.push_back({dt, K, dt_max});
            return result;
        }
        const double dt_opt = std::sqrt(e_tol_t * dt * dt * (static_cast<double>(K) * K - 1.0) / diff);
        result.trace.push_back({dt, K, dt_opt});
        if (dt_opt >= dt) {
            result.dt = dt;
            result.converged = true;
            return result;
        }
        const int K_next = static_cast<int>(std::lround(dt / dt_opt)) + 1;
        K = std::max(K_next, K + 1);  // guard against stalling when dt_opt ~ dt
    }
    throw convergence_error("optimal_time_step: no admissible step within iteration budget");
}

// ---------------------------------------------------------------------------
// Observed order and error estimators
// ---------------------------------------------------------------------------

struct GridStudy {
    double h1 = 0.0, h2 = 0.0, h3 = 0.0;  // fine to coarse
    double g12 = 0.0, g23 = 0.0;
    double v1 = 0.0, v2 = 0.0, v3 = 0.0;
    double p_formal = 2.0;
    double p_hat = 0.0;
    double eps_h = 0.0;
    double gci = 0.0;
};

/// Fixed-point iteration for the observed order of accuracy given solutions
/// on three systematically refined grids. Starts at the formal order and
/// stops when successive iterates differ by less than 1e-3.
inline double observed_order(double v1, double v2, double v3, double g12, double g23,
                             double p_formal, int max_iter = 100) {
    if (!(g12 > 1.0) || !(g23 > 1.0))
        throw validation_error("observed_order: refinement ratios must exceed 1");
    if (v2 == v1) throw validation_error("observed_order: V2 == V1, order undefined");
    const double ratio = (v3 - v2) / (v2 - v1);
    if (ratio <= 0.0)
        throw convergence_error("observed_order: non-monotone grid convergence (difference ratio <= 0)");

    double p = p_formal;
    for (int k = 0; k < max_iter; ++k) {
        const double arg = (std::pow(g12, p) - 1.0) * ratio + std::pow(g12, p);
        if (!(arg > 0.0)) throw convergence_error("observed_order: iteration left the domain of the log");
        const double p_next = std::log(arg) / std::log(g12 * g23);
        if (std::abs(p_next - p) < 1e-3) return p_next;
        p = p_next;
    }
    throw convergence_error("observed_order: fixed point did not converge");
}

/// Relative discretization error estimate from two grids and the observed
/// order: |V1 - V2| / (|V1| (g12^p - 1)).
inline double richardson_error(double v1, double v2, double g12, double p_hat) {
    if (v1 == 0.0) throw validation_error("richardson_error: relative error undefined for V1 = 0");
    const double denom = std::pow(g12, p_hat) - 1.0;
    if (denom == 0.0) throw validation_error("richardson_error: g12^p == 1");
    return std::abs(v1 - v2) / (std::abs(v1) * denom);
}

enum class GciMode { two_grid, three_grid_matched };

/// Safety-factor-scaled Richardson estimate. Two-grid studies use F_s = 3;
/// three-grid studies use 1.25 when the observed order matches the formal
/// order within 10%, else 1.5.
inline double gci(double v1, double v2, double g12, double p_hat, GciMode mode,
                  double p_formal = 2.0) {
    double fs = 3.0;
    if (mode == GciMode::three_grid_matched)
        fs = (std::abs(p_hat - p_formal) <= 0.1 * std::abs(p_formal)) ? 1.25 : 1.5;
    return fs * richardson_error(v1, v2, g12, p_hat);
}

// ---------------------------------------------------------------------------
// Grid selection
// ---------------------------------------------------------------------------

struct SelectGridResult {
    double h = 0.0;
    GridStudy study;
    bool converged = false;
    std::vector<GridStudy> history;
};

/// Refines the mesh (h <- h / g12 per outer pass) until the Richardson
/// estimate drops below e_tol_h. Solutions are memoized across passes, so
/// with g12 == g23 each pass after the first costs one new solve. A pass
/// with V1 == V2 is treated as grid-converged with zero estimated error.
inline SelectGridResult select_grid(const std::function<double(double)>& solve_on, double h_init,
                                    double e_tol_h, double g12, double g23, int max_iters,
                                    double p_formal = 2.0) {
    if (!(h_init > 0.0)) throw validation_error("select_grid: h_init must be positive");
    if (!(e_tol_h > 0.0)) throw validation_error("select_grid: tolerance must be positive");
    if (!(g12 > 1.3) || !(g23 > 1.3))
        throw validation_error("select_grid: refinement ratios must exceed 1.3");
    if (max_iters < 1) throw validation_error("select_grid: iteration budget must be >= 1");

    std::vector<std::pair<double, double>> memo;  // (h, V)
    const auto solve_memo = [&](double h) {
        for (const auto& [hh, vv] : memo)
            if (std::abs(hh - h) <= 1e-12 * std::max(hh, h)) return vv;
        const double v = solve_on(h);
        if (!std::isfinite(v)) throw solver_error("select_grid: non-finite solver output");
        memo.emplace_back(h, v);
        return v;
    };

    SelectGridResult result;
    double h1 = h_init;
    for (int it = 0; it < max_iters; ++it) {
        GridStudy s;
        s.h1 = h1;
        s.h2 = g12 * h1;
        s.h3 = g23 * g12 * h1;
        s.g12 = g12;
        s.g23 = g23;
        s.p_formal = p_formal;
        s.v1 = solve_memo(s.h1);
        s.v2 = solve_memo(s.h2);
        s.v3 = solve_memo(s.h3);

        if (s.v1 == s.v2) {
            s.p_hat = p_formal;
            s.eps_h = 0.0;
            s.gci = 0.0;
            result.history.push_back(s);
            result.h = h1;
            result.study = s;
            result.converged = true;
            return result;
        }
        s.p_hat = observed_order(s.v1, s.v2, s.v3, g12, g23, p_formal);
        s.eps_h = richardson_error(s.v1, s.v2, g12, s.p_hat);
        s.gci = gci(s.v1, s.v2, g12, s.p_hat, GciMode::three_grid_matched, p_formal);
        result.history.push_back(s);
        result.h = h1;
        result.study = s;
        if (s.eps_h < e_tol_h) {
            result.converged = true;
            return result;
        }
        h1 /= g12;
    }
    result.converged = false;
    return result;
}

}  // namespace morrisk
