#pragma once

// Linear triangular finite elements for the two-factor pricing PDE
//
//   dV/dt + (theta(t) + u - alpha r) V_r - b u V_u
//         + 1/2 s1^2 V_rr + 1/2 s2^2 V_uu + gamma s1 s2 V_ru - r V = 0,
//
// marched backward in time with a fully implicit Euler scheme,
//
//   A(rho, t) V^{n-1} = B(rho, t) V^n,       A = M - dt (L0 + theta(t) Lt),  B = M.
//
// The theta drift enters affinely through Lt (unit d/dr convection), so a
// step only refactorizes when theta(t) or the step size changes. Boundary
// closure replaces boundary rows either with a vanishing-second-derivative
// stencil (default for pricing on a truncated domain) or with Dirichlet data
// (used by manufactured-solution studies).

#include "morrisk/core.hpp"
#include "morrisk/hull_white.hpp"
#include "morrisk/instrument.hpp"
#include "morrisk/market_data.hpp"
#include "morrisk/mesh.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace morrisk {

struct ValueSurface {
    double t = 0.0;
    Vec values;
};

enum class BoundaryKind { linearity, dirichlet };

using SpaceTimeFn = std::function<double(double t, double r, double u)>;

struct SolveOptions {
    BoundaryKind boundary = BoundaryKind::linearity;
    SpaceTimeFn dirichlet;  // required when boundary == dirichlet
    SpaceTimeFn source;     // optional volume source
};

// ---------------------------------------------------------------------------
// Galerkin operator pieces
// ---------------------------------------------------------------------------

/// Element-wise assembled operator split. All matrices have boundary test
/// rows zeroed; `bc_rows` carries the boundary closure equations.
struct OperatorSplit {
    SpMat mass;      // consistent mass, interior rows
    SpMat op_fixed;  // theta-independent part of the spatial operator
    SpMat op_theta;  // unit-coefficient d/dr convection (theta multiplier)
    SpMat bc_rows;   // boundary closure rows (stencil or identity)
    std::vector<int> boundary_nodes;

    SpMat system_matrix(double dt, double theta) const {
        SpMat a = mass - dt * (op_fixed + theta * op_theta);
        a += bc_rows;
        return a;
    }
};

namespace detail {

struct ElementGeometry {
    double area;
    std::array<double, 3> br;  // gradient numerators in r
    std::array<double, 3> cu;  // gradient numerators in u
};

inline ElementGeometry element_geometry(const Mesh& mesh, const std::array<int, 3>& e) {
    const auto& p0 = mesh.nodes[e[0]];
    const auto& p1 = mesh.nodes[e[1]];
    const auto& p2 = mesh.nodes[e[2]];
    ElementGeometry g;
    g.br = {p1[1] - p2[1], p2[1] - p0[1], p0[1] - p1[1]};
    g.cu = {p2[0] - p1[0], p0[0] - p2[0], p1[0] - p0[0]};
    g.area = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
    if (g.area <= 0.0) throw validation_error("element with non-positive area");
    return g;
}

// integral over an element of phi_i phi_j phi_k for P1 basis functions
inline double cubic_weight(int i, int j, int k, double area) {
    if (i == j && j == k) return area / 10.0;
    if (i == j || j == k || i == k) return area / 30.0;
    return area / 60.0;
}

}  // namespace detail

inline OperatorSplit assemble_operator_split(const Mesh& mesh, const HullWhiteParams& c,
                                             BoundaryKind boundary) {
    const int n = mesh.node_count();
    if (mesh.nr < 2 || mesh.nu < 2)
        throw validation_error("operator assembly needs at least 2 cells per direction");

    std::vector<Triplet> tm, tf, tt;
    tm.reserve(mesh.element_count() * 9);
    tf.reserve(mesh.element_count() * 9);
    tt.reserve(mesh.element_count() * 9);

    const double half_s1 = 0.5 * c.sigma1 * c.sigma1;
    const double half_s2 = 0.5 * c.sigma2 * c.sigma2;
    const double cross = c.gamma * c.sigma1 * c.sigma2;

    for (const auto& e : mesh.elements) {
        const auto g = detail::element_geometry(mesh, e);
        const double inv4a = 1.0 / (4.0 * g.area);

        std::array<double, 3> rv, uv;  // vertex coordinates
        for (int k = 0; k < 3; ++k) {
            rv[k] = mesh.nodes[e[k]][0];
            uv[k] = mesh.nodes[e[k]][1];
        }
        const double r_sum = rv[0] + rv[1] + rv[2];
        const double u_sum = uv[0] + uv[1] + uv[2];

        for (int i = 0; i < 3; ++i) {
            const int row = e[i];
            if (mesh.on_boundary(row)) continue;  // closure handles boundary rows
            for (int j = 0; j < 3; ++j) {
                const int col = e[j];

                const double mass = g.area / 12.0 * (i == j ? 2.0 : 1.0);

                // convection with coefficient linear in (r, u):
                // int beta phi_i dphi_j/dx = (grad_j) * area/12 * (sum beta + beta_i)
                const double conv_r_lin = g.br[j] / 24.0 *
                    ((u_sum + uv[i]) - c.alpha * (r_sum + rv[i]));
                const double conv_u = -c.b * g.cu[j] / 24.0 * (u_sum + uv[i]);
                const double conv_theta = g.br[j] / 6.0;  // unit coefficient

                // diffusion and cross terms, integrated by parts
                const double diff = -(half_s1 * g.br[i] * g.br[j] + half_s2 * g.cu[i] * g.cu[j]) * inv4a;
                const double diff_cross = -cross * g.br[j] * g.cu[i] * inv4a;

                // reaction -r V with r linear over the element
                double react = 0.0;
                for (int k = 0; k < 3; ++k) react -= rv[k] * detail::cubic_weight(i, j, k, g.area);

                tm.emplace_back(row, col, mass);
                tf.emplace_back(row, col, conv_r_lin + conv_u + diff + diff_cross + react);
                tt.emplace_back(row, col, conv_theta);
            }
        }
    }

    OperatorSplit split;
    split.mass.resize(n, n);
    split.op_fixed.resize(n, n);
    split.op_theta.resize(n, n);
    split.mass.setFromTriplets(tm.begin(), tm.end());
    split.op_fixed.setFromTriplets(tf.begin(), tf.end());
    split.op_theta.setFromTriplets(tt.begin(), tt.end());

    // boundary closure rows
    std::vector<Triplet> tb;
    for (int j = 0; j <= mesh.nu; ++j) {
        for (int i = 0; i <= mesh.nr; ++i) {
            const int idx = mesh.node_index(i, j);
            if (!mesh.on_boundary(idx)) continue;
            split.boundary_nodes.push_back(idx);
            if (boundary == BoundaryKind::dirichlet) {
                tb.emplace_back(idx, idx, 1.0);
                continue;
            }
            // vanishing second difference along the inward grid direction
            int di = 0, dj = 0;
            if (i == 0) di = 1;
            if (i == mesh.nr) di = -1;
            if (j == 0) dj = 1;
            if (j == mesh.nu) dj = -1;
            tb.emplace_back(idx, idx, 1.0);
            tb.emplace_back(idx, mesh.node_index(i + di, j + dj), -2.0);
            tb.emplace_back(idx, mesh.node_index(i + 2 * di, j + 2 * dj), 1.0);
        }
    }
    split.bc_rows.resize(n, n);
    split.bc_rows.setFromTriplets(tb.begin(), tb.end());
    return split;
}

/// One-off assembly of the implicit-step pair (A, B) at time t.
inline std::pair<SpMat, SpMat> assemble(const Mesh& mesh, const ParameterGroup& rho, double t,
                                        double dt, BoundaryKind boundary = BoundaryKind::linearity) {
    const auto split = assemble_operator_split(mesh, rho.constants, boundary);
    return {split.system_matrix(dt, rho.theta.at(t)), split.mass};
}

// ---------------------------------------------------------------------------
// Time grid
// ---------------------------------------------------------------------------

/// Ascending grid 0 = t_0 < ... < t_N = T hitting every key date exactly;
/// each inter-date interval is subdivided uniformly with step <= dt_max.
inline std::vector<double> build_time_grid(const std::vector<double>& key_dates, double maturity,
                                           double dt_max) {
    if (!(maturity > 0.0)) throw validation_error("build_time_grid: maturity must be positive");
    if (!(dt_max > 0.0)) throw validation_error("build_time_grid: dt_max must be positive");
    std::vector<double> anchors{0.0};
    for (double d : key_dates) {
        if (d < -1e-12 || d > maturity + 1e-9)
            throw schedule_error("key date " + std::to_string(d) + " outside [0, maturity]");
        anchors.push_back(std::min(d, maturity));
    }
    anchors.push_back(maturity);
    std::sort(anchors.begin(), anchors.end());
    anchors.erase(std::unique(anchors.begin(), anchors.end(),
                              [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                  anchors.end());

    std::vector<double> grid{0.0};
    for (std::size_t k = 0; k + 1 < anchors.size(); ++k) {
        const double lo = anchors[k], hi = anchors[k + 1];
        const int steps = std::max(1, static_cast<int>(std::ceil((hi - lo) / dt_max - 1e-12)));
        for (int s = 1; s <= steps; ++s) grid.push_back(lo + (hi - lo) * s / steps);
    }
    grid.back() = maturity;
    return grid;
}

/// Largest step of a grid built by build_time_grid.
inline double max_step(const std::vector<double>& grid) {
    double dt = 0.0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) dt = std::max(dt, grid[k + 1] - grid[k]);
    return dt;
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

struct FullSolveResult {
    std::vector<ValueSurface> trajectory;  // index k <-> time_grid[k], post-event states
    double value_at_spot = 0.0;
};

class FullModel {
public:
    FullModel(Mesh mesh, HullWhiteParams constants, std::vector<double> time_grid,
              SolveOptions options = {})
        : mesh_(std::move(mesh)),
          constants_(constants),
          time_grid_(std::move(time_grid)),
          options_(std::move(options)),
          split_(assemble_operator_split(mesh_, constants_, options_.boundary)) {
        if (time_grid_.size() < 2) throw validation_error("full model needs at least one time step");
        if (options_.boundary == BoundaryKind::dirichlet && !options_.dirichlet)
            throw validation_error("dirichlet boundary requires a boundary-value function");
    }

    const Mesh& mesh() const { return mesh_; }
    const HullWhiteParams& constants() const { return constants_; }
    const std::vector<double>& time_grid() const { return time_grid_; }
    const OperatorSplit& operators() const { return split_; }
    const SolveOptions& options() const { return options_; }
    int order() const { return mesh_.node_count(); }

    /// Default reference rates: affine model swap rates at the node state.
    ReferenceRateFn default_reference_rates(const ParameterGroup& rho, const FloatingRule& rule) const {
        return [this, &rho, rule](double t, double r, double u) {
            return std::make_pair(cms_swap_rate(rho.constants, rho.theta, t, rule.tenor_a, r, u),
                                  cms_swap_rate(rho.constants, rho.theta, t, rule.tenor_b, r, u));
        };
    }

    /// Coupon cashflow vector at an event date (zero vector if no coupon).
    Vec coupon_vector(const Instrument& inst, const ParameterGroup& rho, double t,
                      const ReferenceRateFn* reference_override = nullptr) const {
        Vec c = Vec::Zero(order());
        bool any = false;
        if (const auto* fc = inst.fixed_coupon_at(t)) {
            c.setConstant(inst.nominal * fc->rate * inst.accrual_at(t));
            any = true;
        }
        if (inst.floating_coupon_at(t)) {
            const double accrual = inst.accrual_at(t);
            const auto& rule = *inst.floating;
            if (reference_override) {
                for (int i = 0; i < order(); ++i) {
                    const auto [cms_a, cms_b] =
                        (*reference_override)(t, mesh_.nodes[i][0], mesh_.nodes[i][1]);
                    c[i] += inst.nominal * accrual * coupon_rate(cms_a, cms_b, rule.cap, rule.floor);
                }
            } else {
                // affine default: bond coefficients depend on t only, so build
                // them once and sweep the mesh
                const CmsRateCache cache(rho.constants, rho.theta, t,
                                         std::max(rule.tenor_a, rule.tenor_b));
                for (int i = 0; i < order(); ++i) {
                    const double r = mesh_.nodes[i][0];
                    const double u = mesh_.nodes[i][1];
                    c[i] += inst.nominal * accrual *
                            coupon_rate(cache.swap_rate(rule.tenor_a, r, u),
                                        cache.swap_rate(rule.tenor_b, r, u), rule.cap, rule.floor);
                }
            }
            any = true;
        }
        if (!any) c.setZero();
        return c;
    }

    /// Backward sweep over the time grid with coupon and put events applied
    /// at their dates (coupon first, then put).
    FullSolveResult solve(const Instrument& inst, const ParameterGroup& rho,
                          const ReferenceRateFn* reference_override = nullptr,
                          bool keep_trajectory = true) const {
        inst.validate();
        check_schedule(inst);
        const int last = static_cast<int>(time_grid_.size()) - 1;

        FullSolveResult result;
        if (keep_trajectory) result.trajectory.resize(time_grid_.size());

        Vec v = Vec::Constant(order(), inst.nominal);
        apply_events(inst, rho, time_grid_[last], v, reference_override);
        if (keep_trajectory) result.trajectory[last] = {time_grid_[last], v};

        Eigen::SparseLU<SpMat> lu;
        bool analyzed = false;
        double cached_dt = -1.0, cached_theta = std::numeric_limits<double>::quiet_NaN();

        for (int n = last; n >= 1; --n) {
            const double t_to = time_grid_[n - 1];
            const double dt = time_grid_[n] - t_to;
            const double theta = rho.theta.at(t_to);
            if (dt != cached_dt || theta != cached_theta) {
                const SpMat a = split_.system_matrix(dt, theta);
                if (!analyzed) {
                    lu.analyzePattern(a);
                    analyzed = true;
                }
                lu.factorize(a);
                if (lu.info() != Eigen::Success)
                    throw solver_error("singular system at t=" + std::to_string(t_to) +
                                       " (scenario " + std::to_string(rho.scenario_id) + ")");
                cached_dt = dt;
                cached_theta = theta;
            }
            Vec rhs = split_.mass * v;
            add_rhs_terms(t_to, dt, rhs);
            v = lu.solve(rhs);
            if (lu.info() != Eigen::Success || !v.allFinite())
                throw solver_error("linear solve failed at t=" + std::to_string(t_to) +
                                   " (scenario " + std::to_string(rho.scenario_id) + ")");
            apply_events(inst, rho, t_to, v, reference_override);
            if (keep_trajectory) result.trajectory[n - 1] = {t_to, v};
        }
        result.value_at_spot = mesh_.interpolate(v, rho.spot_rate, 0.0);
        if (!keep_trajectory) result.trajectory = {{0.0, v}};
        return result;
    }

    /// Low-level sweep without instrument events; terminal state supplied by
    /// the caller. Used by convergence studies.
    Vec solve_linear(const Vec& terminal, double theta_value = 0.0) const {
        Vec v = terminal;
        Eigen::SparseLU<SpMat> lu;
        bool analyzed = false;
        double cached_dt = -1.0;
        for (int n = static_cast<int>(time_grid_.size()) - 1; n >= 1; --n) {
            const double t_to = time_grid_[n - 1];
            const double dt = time_grid_[n] - t_to;
            if (dt != cached_dt) {
                const SpMat a = split_.system_matrix(dt, theta_value);
                if (!analyzed) {
                    lu.analyzePattern(a);
                    analyzed = true;
                }
                lu.factorize(a);
                if (lu.info() != Eigen::Success) throw solver_error("singular system in solve_linear");
                cached_dt = dt;
            }
            Vec rhs = split_.mass * v;
            add_rhs_terms(t_to, dt, rhs);
            v = lu.solve(rhs);
            if (lu.info() != Eigen::Success) throw solver_error("linear solve failed in solve_linear");
        }
        return v;
    }

    bool has_event_at(const Instrument& inst, double t) const {
        return inst.fixed_coupon_at(t) != nullptr || inst.floating_coupon_at(t) ||
               inst.put_at(t) != nullptr;
    }

    /// Applies coupon (first) and put (second) updates in place.
    void apply_events(const Instrument& inst, const ParameterGroup& rho, double t, Vec& v,
                      const ReferenceRateFn* reference_override = nullptr) const {
        if (!has_event_at(inst, t)) return;
        v += coupon_vector(inst, rho, t, reference_override);
        if (const auto* put = inst.put_at(t)) v = v.cwiseMax(put->strike);
    }

    void check_schedule(const Instrument& inst) const {
        for (double d : inst.key_dates()) {
            bool found = false;
            for (double t : time_grid_)
                if (std::abs(t - d) < 1e-9) {
                    found = true;
                    break;
                }
            if (!found)
                throw schedule_error("event date " + std::to_string(d) + " missing from time grid");
        }
    }

private:
    void add_rhs_terms(double t_to, double dt, Vec& rhs) const {
        if (options_.source) {
            Vec f(order());
            for (int i = 0; i < order(); ++i)
                f[i] = options_.source(t_to, mesh_.nodes[i][0], mesh_.nodes[i][1]);
            rhs += dt * (split_.mass * f);
        }
        if (options_.boundary == BoundaryKind::dirichlet) {
            for (int idx : split_.boundary_nodes)
                rhs[idx] = options_.dirichlet(t_to, mesh_.nodes[idx][0], mesh_.nodes[idx][1]);
        }
    }

    Mesh mesh_;
    HullWhiteParams constants_;
    std::vector<double> time_grid_;
    SolveOptions options_;
    OperatorSplit split_;
};

/// Truncated domain sized from the stationary factor moments: six standard
/// deviations around the observed rate range, the disturbance centered at 0.
inline DomainBounds default_domain(const ParameterSpace& space, double n_std = 6.0) {
    if (space.groups.empty()) throw validation_error("default_domain: empty parameter space");
    const auto m = stationary_moments(space.groups.front().constants);
    double lo = space.source_rates.size() > 0 ? space.source_rates.minCoeff()
                                              : space.groups.front().spot_rate;
    double hi = space.source_rates.size() > 0 ? space.source_rates.maxCoeff()
                                              : space.groups.front().spot_rate;
    for (const auto& g : space.groups) {
        lo = std::min(lo, g.spot_rate);
        hi = std::max(hi, g.spot_rate);
    }
    DomainBounds b;
    b.r_min = lo - n_std * std::sqrt(m.var_r);
    b.r_max = hi + n_std * std::sqrt(m.var_r);
    b.u_min = -n_std * std::sqrt(m.var_u);
    b.u_max = n_std * std::sqrt(m.var_u);
    return b;
}

}  // namespace morrisk
