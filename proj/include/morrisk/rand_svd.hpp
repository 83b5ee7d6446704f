#pragma once

// Adaptive randomized range finder and randomized truncated/compact SVD.
//
// The range finder grows an orthonormal basis G one Gaussian probe at a
// time, keeping a rolling window of projected probe residuals. It stops when
// the largest residual norm in the window falls below eps / (10 sqrt(2/pi)),
// which yields the posterior bound
//
//   || A - G G^T A ||_2  <=  10 sqrt(2/pi) max_i || (I - G G^T) A g_i ||_2
//
// with high probability. The truncated SVD then factors the small matrix
// G^T A densely and lifts the left factor back through G.

#include "morrisk/core.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <deque>
#include <optional>

namespace morrisk {

struct RangeFinderResult {
    Mat basis;                    // M x k', orthonormal columns
    double exit_window_max = 0.0; // largest probe residual norm at exit
    bool full_rank = false;       // hit min(M, n) columns before meeting eps
    int probes_used = 0;
};

struct RangeFinderOptions {
    double eps = 1e-10;
    int window = 10;                    // probes kept in the stopping window
    std::optional<int> max_columns;     // optional hard cap on basis size
};

inline double range_finder_threshold(double eps) {
    return eps / (10.0 * std::sqrt(2.0 / M_PI));
}

inline RangeFinderResult range_finder(const Mat& a, const RangeFinderOptions& opt, std::uint64_t seed) {
    if (!(opt.eps > 0.0)) throw validation_error("range_finder: eps must be positive");
    if (opt.window < 1) throw validation_error("range_finder: window must be >= 1");
    const Eigen::Index m = a.rows();
    const Eigen::Index n = a.cols();
    const Eigen::Index max_rank = std::min(m, n);
    const Eigen::Index cap = opt.max_columns ? std::min<Eigen::Index>(*opt.max_columns, max_rank)
                                             : max_rank;

    Rng rng(seed);
    const double threshold = range_finder_threshold(opt.eps);

    Mat basis(m, cap);
    Eigen::Index k = 0;

    std::deque<Vec> window;
    for (int j = 0; j < opt.window; ++j) window.push_back(a * gaussian_vector(n, rng));
    int probes = opt.window;

    double scale = 0.0;
    for (const auto& y : window) scale = std::max(scale, y.norm());

    const auto window_max = [&] {
        double mx = 0.0;
        for (const auto& y : window) mx = std::max(mx, y.norm());
        return mx;
    };

    RangeFinderResult result;
    while (true) {
        if (window_max() < threshold) {
            result.exit_window_max = window_max();
            break;
        }
        if (k == cap) {
            result.exit_window_max = window_max();
            result.full_rank = (k == max_rank);
            break;
        }

        Vec y = window.front();
        window.pop_front();

        // project against the accepted columns; one repeated pass controls
        // orthogonality drift
        for (int pass = 0; pass < 2; ++pass)
            if (k > 0) y -= basis.leftCols(k) * (basis.leftCols(k).transpose() * y);

        const double norm = y.norm();
        if (norm <= 1e-14 * std::max(scale, 1e-300)) {
            // numerically dependent direction; replace the probe and move on
            Vec fresh = a * gaussian_vector(n, rng);
            ++probes;
            for (int pass = 0; pass < 2; ++pass)
                if (k > 0) fresh -= basis.leftCols(k) * (basis.leftCols(k).transpose() * fresh);
            window.push_back(std::move(fresh));
            continue;
        }

        basis.col(k) = y / norm;
        ++k;

        Vec fresh = a * gaussian_vector(n, rng);
        ++probes;
        for (int pass = 0; pass < 2; ++pass)
            fresh -= basis.leftCols(k) * (basis.leftCols(k).transpose() * fresh);
        scale = std::max(scale, fresh.norm());
        window.push_back(std::move(fresh));

        // keep the remaining window orthogonal to the newly accepted column
        const Vec& g = basis.col(k - 1);
        for (auto it = window.begin(); std::next(it) != window.end(); ++it)
            *it -= g * g.dot(*it);
    }

    result.basis = basis.leftCols(k);
    result.probes_used = probes;
    return result;
}

// ---------------------------------------------------------------------------
// Truncated / compact SVD
// ---------------------------------------------------------------------------

struct SvdFactors {
    Mat phi;    // M x k left singular vectors
    Vec sigma;  // k nonincreasing positive singular values
    Mat psi;    // n x k right singular vectors
    int k = 0;

    double discarded_energy(const Mat& source) const {
        const double total = source.squaredNorm();
        return std::max(0.0, total - sigma.squaredNorm());
    }
};

struct SvdOptions {
    std::optional<double> eps;   // stop the range finder at this tolerance
    std::optional<int> rank;     // or request a fixed rank
    int window = 10;
    int oversample = 10;         // extra range columns in rank mode
};

/// Randomized truncated SVD. In eps mode the retained rank is the number of
/// singular values at or above eps; in rank mode exactly `rank` values are
/// kept (fewer if the matrix has lower numerical rank).
inline SvdFactors randomized_svd(const Mat& a, const SvdOptions& opt, std::uint64_t seed) {
    if (!opt.eps && !opt.rank)
        throw validation_error("randomized_svd: specify eps or rank");

    RangeFinderOptions rf;
    rf.window = opt.window;
    if (opt.eps) {
        rf.eps = *opt.eps;
    } else {
        rf.eps = 1e-300;  // rank mode: never stop on the tolerance
        rf.max_columns = std::min<Eigen::Index>(*opt.rank + opt.oversample,
                                                std::min(a.rows(), a.cols()));
    }
    const RangeFinderResult range = range_finder(a, rf, seed);
    const Mat reduced = range.basis.transpose() * a;  // k' x n

    Eigen::BDCSVD<Mat> svd(reduced, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& values = svd.singularValues();

    Eigen::Index keep = 0;
    if (opt.rank) {
        keep = std::min<Eigen::Index>(*opt.rank, values.size());
        while (keep > 0 && values[keep - 1] <= 0.0) --keep;
    } else {
        while (keep < values.size() && values[keep] >= *opt.eps) ++keep;
    }

    SvdFactors f;
    f.k = static_cast<int>(keep);
    f.phi = range.basis * svd.matrixU().leftCols(keep);
    f.sigma = values.head(keep);
    f.psi = svd.matrixV().leftCols(keep);
    return f;
}

/// Dense reference decomposition (thin). Used as the oracle side of accuracy
/// checks and for speed comparisons.
inline SvdFactors dense_svd(const Mat& a) {
    Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SvdFactors f;
    const Vec& values = svd.singularValues();
    Eigen::Index keep = 0;
    while (keep < values.size() && values[keep] > 0.0) ++keep;
    f.k = static_cast<int>(keep);
    f.phi = svd.matrixU().leftCols(keep);
    f.sigma = values.head(keep);
    f.psi = svd.matrixV().leftCols(keep);
    return f;
}

}  // namespace morrisk
