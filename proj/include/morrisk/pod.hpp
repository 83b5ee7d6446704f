#pragma once

// Snapshot management, proper orthogonal decomposition, Galerkin-projected
// reduced models and the associated error measures.
//
// The reduced system is A_d x^{n-1} = B_d x^n with A_d = Q^T A Q and
// B_d = Q^T B Q. Coupon cashflows are state-independent vectors, so they act
// exactly in reduced coordinates through Q^T c; the put update is nonlinear
// and is applied by lifting to the mesh, taking the maximum, and projecting
// back — only at exercise dates, which preserves the reduced-model speedup.

#include "morrisk/core.hpp"
#include "morrisk/fem.hpp"
#include "morrisk/rand_svd.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <utility>
#include <vector>

namespace morrisk {

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

struct SnapshotMatrix {
    Mat columns;                                // M x (stored steps)
    std::vector<std::pair<int, int>> sources;   // (scenario_id, time index)

    Eigen::Index rows() const { return columns.rows(); }
    Eigen::Index count() const { return columns.cols(); }
    bool empty() const { return columns.size() == 0; }
};

/// Appends every stored time step of a trajectory, in time order.
inline void append_snapshots(SnapshotMatrix& s, const std::vector<ValueSurface>& trajectory,
                             int scenario_id) {
    if (trajectory.empty()) return;
    const Eigen::Index m = trajectory.front().values.size();
    if (!s.empty() && s.rows() != m)
        throw validation_error("append_snapshots: surface dimension does not match snapshot matrix");
    const Eigen::Index old = s.empty() ? 0 : s.count();
    Mat grown(m, old + static_cast<Eigen::Index>(trajectory.size()));
    if (old > 0) grown.leftCols(old) = s.columns;
    for (std::size_t k = 0; k < trajectory.size(); ++k) {
        if (trajectory[k].values.size() != m)
            throw validation_error("append_snapshots: inconsistent surface dimensions");
        grown.col(old + static_cast<Eigen::Index>(k)) = trajectory[k].values;
        s.sources.emplace_back(scenario_id, static_cast<int>(k));
    }
    s.columns = std::move(grown);
}

// ---------------------------------------------------------------------------
// Basis
// ---------------------------------------------------------------------------

struct ReducedBasis {
    Mat Q;                               // M x d orthonormal
    int d = 0;
    Vec sigma;                           // retained singular values
    double sigma_discarded_sq_sum = 0.0; // sum of squared discarded singular values

    ReducedBasis truncated(int dim) const {
        if (dim < 1 || dim > d) throw validation_error("basis truncation out of range");
        ReducedBasis b;
        b.Q = Q.leftCols(dim);
        b.d = dim;
        b.sigma = sigma.head(dim);
        b.sigma_discarded_sq_sum = sigma_discarded_sq_sum + sigma.tail(d - dim).squaredNorm();
        return b;
    }
};

/// Sum of squared singular values beyond the first d (the projection residual
/// energy || S - Q_d Q_d^T S ||_F^2 when sigma is the full spectrum).
inline double projection_error(const Vec& sigma, int d) {
    if (d < 0) throw validation_error("projection_error: d must be nonnegative");
    for (Eigen::Index i = 1; i < sigma.size(); ++i)
        if (sigma[i] > sigma[i - 1] + 1e-12 * std::abs(sigma[i - 1]))
            throw validation_error("projection_error: singular values must be nonincreasing");
    if (d >= sigma.size()) return 0.0;
    return sigma.tail(sigma.size() - d).squaredNorm();
}

struct PodTruncation {
    std::optional<int> d;
    std::optional<double> e_tol;  // absolute bound on the discarded energy
};

/// Reduced basis from the leading left singular vectors of the snapshot
/// matrix, computed with the randomized decomposition. The discarded energy
/// accounts for modes the range finder never resolved (via the Frobenius
/// norm), so the stored sum is exact up to roundoff.
inline ReducedBasis pod_basis(const SnapshotMatrix& s, const PodTruncation& trunc,
                              std::uint64_t seed = 0x9d0bull, double svd_eps_floor = 1e-12) {
    if (s.empty()) throw validation_error("pod_basis: empty snapshot matrix");
    if (!trunc.d && !trunc.e_tol) throw validation_error("pod_basis: specify d or e_tol");

    SvdOptions opt;
    const double scale = std::sqrt(s.columns.squaredNorm() / std::max<Eigen::Index>(1, s.count()));
    opt.eps = std::max(svd_eps_floor * std::max(scale, 1e-300), 1e-300);
    SvdFactors f = randomized_svd(s.columns, opt, seed);
    if (f.k == 0) throw validation_error("pod_basis: snapshot matrix is numerically zero");

    const double unresolved = f.discarded_energy(s.columns);
    int d = f.k;
    if (trunc.d) {
        if (*trunc.d > f.k)
            throw validation_error("pod_basis: requested dimension " + std::to_string(*trunc.d) +
                                   " exceeds snapshot rank " + std::to_string(f.k));
        d = *trunc.d;
    } else {
        d = f.k;
        while (d > 1) {
            const double discarded = unresolved + f.sigma.tail(f.k - (d - 1)).squaredNorm();
            if (discarded > *trunc.e_tol) break;
            --d;
        }
    }

    ReducedBasis basis;
    basis.Q = f.phi.leftCols(d);
    basis.d = d;
    basis.sigma = f.sigma.head(d);
    basis.sigma_discarded_sq_sum = unresolved + f.sigma.tail(f.k - d).squaredNorm();
    return basis;
}

// ---------------------------------------------------------------------------
// Reduced model
// ---------------------------------------------------------------------------

struct ReducedStep {
    double t_to = 0.0;   // the step solved A_d x_out = B_d x_in arriving at t_to
    double dt = 0.0;
    double theta = 0.0;
    Vec x_in;            // reduced state the step propagated (post events)
    Vec x_out;           // reduced state before events at t_to
};

struct ReducedSolveResult {
    double value_at_spot = 0.0;
    Mat coords;                          // d x (N+1), post-event reduced states per grid time
    std::vector<ReducedStep> steps;      // in sweep order (from maturity down)
    std::vector<ValueSurface> key_surfaces;  // lifted surfaces at event dates
};

class ReducedModel {
public:
    ReducedModel(const FullModel& full, ReducedBasis basis)
        : full_(&full), basis_(std::move(basis)) {
        if (full.options().boundary != BoundaryKind::linearity || full.options().source)
            throw validation_error("reduced model supports the homogeneous pricing configuration only");
        const auto& ops = full.operators();
        const Mat& q = basis_.Q;
        mass_q_ = ops.mass * q;
        fixed_q_ = ops.op_fixed * q;
        theta_q_ = ops.op_theta * q;
        bc_q_ = ops.bc_rows * q;
        mass_d_ = q.transpose() * mass_q_;
        fixed_d_ = q.transpose() * fixed_q_;
        theta_d_ = q.transpose() * theta_q_;
        bc_d_ = q.transpose() * bc_q_;
    }

    const ReducedBasis& basis() const { return basis_; }
    const FullModel& full_model() const { return *full_; }
    int dimension() const { return basis_.d; }

    /// Reduced pair (A_d, B_d) at the given step size and drift value.
    std::pair<Mat, Mat> assemble_reduced(double dt, double theta) const {
        Mat a = bc_d_ + mass_d_ - dt * (fixed_d_ + theta * theta_d_);
        return {std::move(a), mass_d_};
    }

    ReducedSolveResult solve(const Instrument& inst, const ParameterGroup& rho,
                             const ReferenceRateFn* reference_override = nullptr) const {
        inst.validate();
        full_->check_schedule(inst);
        const auto& grid = full_->time_grid();
        const int last = static_cast<int>(grid.size()) - 1;
        const int d = basis_.d;

        ReducedSolveResult result;
        result.coords.resize(d, grid.size());
        result.steps.reserve(grid.size());

        Vec v_terminal = Vec::Constant(full_->order(), inst.nominal);
        full_->apply_events(inst, rho, grid[last], v_terminal, reference_override);
        Vec x = basis_.Q.transpose() * v_terminal;
        result.coords.col(last) = x;
        if (full_->has_event_at(inst, grid[last]))
            result.key_surfaces.push_back({grid[last], basis_.Q * x});

        Eigen::PartialPivLU<Mat> lu;
        double cached_dt = -1.0, cached_theta = std::numeric_limits<double>::quiet_NaN();

        for (int n = last; n >= 1; --n) {
            const double t_to = grid[n - 1];
            const double dt = grid[n] - t_to;
            const double theta = rho.theta.at(t_to);
            if (dt != cached_dt || theta != cached_theta) {
                Mat a = bc_d_ + mass_d_ - dt * (fixed_d_ + theta * theta_d_);
                lu.compute(a);
                cached_dt = dt;
                cached_theta = theta;
            }
            ReducedStep step;
            step.t_to = t_to;
            step.dt = dt;
            step.theta = theta;
            step.x_in = x;
            x = lu.solve(mass_d_ * x);
            if (!x.allFinite())
                throw solver_error("reduced solve failed at t=" + std::to_string(t_to) +
                                   " (scenario " + std::to_string(rho.scenario_id) + ")");
            step.x_out = x;
            result.steps.push_back(std::move(step));

            if (full_->has_event_at(inst, t_to)) {
                const Vec coupon = full_->coupon_vector(inst, rho, t_to, reference_override);
                x += basis_.Q.transpose() * coupon;
                if (const auto* put = inst.put_at(t_to)) {
                    Vec lifted = basis_.Q * x;
                    lifted = lifted.cwiseMax(put->strike);
                    x = basis_.Q.transpose() * lifted;
                    result.key_surfaces.push_back({t_to, std::move(lifted)});
                } else {
                    result.key_surfaces.push_back({t_to, basis_.Q * x});
                }
            }
            result.coords.col(n - 1) = x;
        }

        const Vec v0 = basis_.Q * x;
        result.value_at_spot = full_->mesh().interpolate(v0, rho.spot_rate, 0.0);
        return result;
    }

    /// Lifts the stored reduced states to mesh surfaces at every grid time.
    std::vector<ValueSurface> lift_trajectory(const ReducedSolveResult& r) const {
        const auto& grid = full_->time_grid();
        std::vector<ValueSurface> out(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k)
            out[k] = {grid[k], basis_.Q * r.coords.col(static_cast<Eigen::Index>(k))};
        return out;
    }

    /// Full-order residual of the reduced trajectory, || A Q x_out - B Q x_in ||_2
    /// per linear step, aggregated over the sweep.
    double residual_norm(const ReducedSolveResult& r, bool use_max = true) const {
        double mx = 0.0, sq = 0.0;
        for (const auto& s : r.steps) {
            const Vec res = bc_q_ * s.x_out + mass_q_ * s.x_out -
                            s.dt * (fixed_q_ * s.x_out + s.theta * (theta_q_ * s.x_out)) -
                            mass_q_ * s.x_in;
            const double norm = res.norm();
            mx = std::max(mx, norm);
            sq += norm * norm;
        }
        if (use_max) return mx;
        return r.steps.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(r.steps.size()));
    }

private:
    const FullModel* full_;
    ReducedBasis basis_;
    Mat mass_q_, fixed_q_, theta_q_, bc_q_;  // M x d
    Mat mass_d_, fixed_d_, theta_d_, bc_d_;  // d x d
};

/// Galerkin projection of the full model onto the basis.
inline ReducedModel project(const FullModel& full, ReducedBasis basis) {
    return ReducedModel(full, std::move(basis));
}

/// Relative trajectory error sqrt(sum_n ||V_n - W_n||^2) / sqrt(sum_n ||V_n||^2).
inline double reduced_model_error(const std::vector<ValueSurface>& full_traj,
                                  const std::vector<ValueSurface>& lifted_traj) {
    if (full_traj.size() != lifted_traj.size())
        throw validation_error("reduced_model_error: trajectory lengths differ");
    double num = 0.0, den = 0.0;
    for (std::size_t n = 0; n < full_traj.size(); ++n) {
        if (full_traj[n].values.size() != lifted_traj[n].values.size())
            throw validation_error("reduced_model_error: dimension mismatch at step " + std::to_string(n));
        num += (full_traj[n].values - lifted_traj[n].values).squaredNorm();
        den += full_traj[n].values.squaredNorm();
    }
    if (den == 0.0) throw validation_error("reduced_model_error: zero reference trajectory");
    return std::sqrt(num) / std::sqrt(den);
}

// ---------------------------------------------------------------------------
// Error budget
// ---------------------------------------------------------------------------

struct ErrorBudget {
    double eps_h = 0.0;
    double eps_pod = 0.0;
    double eps_rm = 0.0;
    double eps_samp = 0.0;
    double e_tol_h = 0.0;
    double e_tol_d = 0.0;
    double e_tol_samp = 0.0;
    double e_tol = 0.0;

    double eps_total() const { return eps_h + eps_pod + eps_rm + eps_samp; }
    bool within_tolerance() const { return eps_total() < e_tol; }
};

// ---------------------------------------------------------------------------
// Reduced-dimension selection
// ---------------------------------------------------------------------------

struct DimensionTracePoint {
    int d = 0;
    double eps_pod = 0.0;
    double eps_rm = 0.0;
};

struct SelectDimensionResult {
    int d = 0;
    ReducedBasis basis;
    double eps_pod = 0.0;  // mean discarded energy per snapshot column
    double eps_rm = 0.0;
    bool converged = false;
    std::vector<DimensionTracePoint> trace;
};

inline SelectDimensionResult select_dimension_with_basis(const ReducedBasis& master,
                                                         const SnapshotMatrix& snapshots,
                                                         const FullModel& full, const Instrument& inst,
                                                         const ParameterGroup& test_rho, double e_tol_d) {
    const double columns = static_cast<double>(snapshots.count());
    const FullSolveResult reference = full.solve(inst, test_rho);

    SelectDimensionResult result;
    for (int d = 1; d <= master.d; ++d) {
        const ReducedBasis basis = master.truncated(d);
        const ReducedModel rm(full, basis);
        const ReducedSolveResult reduced = rm.solve(inst, test_rho);
        const double eps_rm = reduced_model_error(reference.trajectory, rm.lift_trajectory(reduced));
        const double eps_pod = basis.sigma_discarded_sq_sum / columns;
        result.trace.push_back({d, eps_pod, eps_rm});
        if (eps_pod + eps_rm < e_tol_d) {
            result.d = d;
            result.basis = basis;
            result.eps_pod = eps_pod;
            result.eps_rm = eps_rm;
            result.converged = true;
            return result;
        }
    }
    result.d = master.d;
    result.basis = master;
    result.eps_pod = result.trace.empty() ? 0.0 : result.trace.back().eps_pod;
    result.eps_rm = result.trace.empty() ? 0.0 : result.trace.back().eps_rm;
    result.converged = false;
    return result;
}

/// Grows the reduced dimension until the projection error plus the reduced
/// model error on a held-out test scenario meets e_tol_d. The projection
/// error is normalized per snapshot column so it is comparable with the
/// relative trajectory error.
inline SelectDimensionResult select_dimension(const SnapshotMatrix& snapshots, const FullModel& full,
                                              const Instrument& inst, const ParameterGroup& test_rho,
                                              double e_tol_d, std::uint64_t seed = 0x5e1ull) {
    if (snapshots.empty()) throw validation_error("select_dimension: empty snapshot matrix");
    if (!(e_tol_d > 0.0)) throw validation_error("select_dimension: tolerance must be positive");
    PodTruncation keep_all;
    keep_all.e_tol = 0.0;
    const ReducedBasis master = pod_basis(snapshots, keep_all, seed);
    return select_dimension_with_basis(master, snapshots, full, inst, test_rho, e_tol_d);
}

// ---------------------------------------------------------------------------
// Basis checkpoint
// ---------------------------------------------------------------------------

namespace detail {
constexpr std::uint32_t kBasisMagic = 0x4252524dU;  // "MRRB" little-endian
constexpr std::uint32_t kBasisVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw parse_error("basis checkpoint: truncated file");
    return v;
}
}  // namespace detail

inline void save_basis(const ReducedBasis& basis, const std::vector<std::pair<int, int>>& sources,
                       const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot write " + path);
    detail::write_pod(out, detail::kBasisMagic);
    detail::write_pod(out, detail::kBasisVersion);
    detail::write_pod<std::int64_t>(out, basis.Q.rows());
    detail::write_pod<std::int64_t>(out, basis.Q.cols());
    out.write(reinterpret_cast<const char*>(basis.Q.data()),
              static_cast<std::streamsize>(sizeof(double) * basis.Q.size()));
    detail::write_pod<std::int64_t>(out, basis.sigma.size());
    out.write(reinterpret_cast<const char*>(basis.sigma.data()),
              static_cast<std::streamsize>(sizeof(double) * basis.sigma.size()));
    detail::write_pod(out, basis.sigma_discarded_sq_sum);
    detail::write_pod<std::int64_t>(out, static_cast<std::int64_t>(sources.size()));
    for (const auto& [id, step] : sources) {
        detail::write_pod<std::int32_t>(out, id);
        detail::write_pod<std::int32_t>(out, step);
    }
}

inline std::pair<ReducedBasis, std::vector<std::pair<int, int>>> load_basis(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open basis checkpoint: " + path);
    if (detail::read_pod<std::uint32_t>(in) != detail::kBasisMagic)
        throw parse_error("basis checkpoint: bad magic");
    if (detail::read_pod<std::uint32_t>(in) != detail::kBasisVersion)
        throw parse_error("basis checkpoint: unsupported version");
    ReducedBasis basis;
    const auto rows = detail::read_pod<std::int64_t>(in);
    const auto cols = detail::read_pod<std::int64_t>(in);
    basis.Q.resize(rows, cols);
    in.read(reinterpret_cast<char*>(basis.Q.data()),
            static_cast<std::streamsize>(sizeof(double) * basis.Q.size()));
    basis.d = static_cast<int>(cols);
    const auto ns = detail::read_pod<std::int64_t>(in);
    basis.sigma.resize(ns);
    in.read(reinterpret_cast<char*>(basis.sigma.data()),
            static_cast<std::streamsize>(sizeof(double) * basis.sigma.size()));
    basis.sigma_discarded_sq_sum = detail::read_pod<double>(in);
    const auto n_sources = detail::read_pod<std::int64_t>(in);
    std::vector<std::pair<int, int>> sources;
    sources.reserve(static_cast<std::size_t>(n_sources));
    for (std::int64_t i = 0; i < n_sources; ++i) {
        const auto id = detail::read_pod<std::int32_t>(in);
        const auto step = detail::read_pod<std::int32_t>(in);
        sources.emplace_back(id, step);
    }
    if (!in) throw parse_error("basis checkpoint: truncated file");
    return {std::move(basis), std::move(sources)};
}

}  // namespace morrisk
