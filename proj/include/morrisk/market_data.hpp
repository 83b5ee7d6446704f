#pragma once

// Yield-curve ingestion, scenario simulation and curve calibration.
//
// Curves are stored as continuously compounded zero rates on a shared tenor
// grid. Scenario generation resamples daily log-returns of a historical rate
// panel with replacement, accumulates them over the horizon and applies the
// result to the last observed curve; it is a pure function of
// (history, s, horizon, seed). Calibration fits the piecewise-constant drift
// theta(t) segment by segment so that model zero-coupon bond prices reproduce
// the input discount factors at the tenor points.

#include "morrisk/core.hpp"
#include "morrisk/hull_white.hpp"

#include <json.hpp>

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace morrisk {

struct YieldCurveSet {
    std::vector<double> tenors;  // year fractions, strictly increasing, > 0
    Mat rates;                   // s x m, continuously compounded zero rates
    std::string label;

    Eigen::Index count() const { return rates.rows(); }
    Eigen::Index tenor_count() const { return static_cast<Eigen::Index>(tenors.size()); }

    void validate() const {
        if (tenors.size() < 2) throw validation_error("yield curve set needs at least two tenors");
        for (std::size_t i = 0; i < tenors.size(); ++i) {
            if (!(tenors[i] > 0.0))
                throw validation_error("tenor " + std::to_string(i) + " must be positive");
            if (i > 0 && !(tenors[i] > tenors[i - 1]))
                throw validation_error("tenors must be strictly increasing (index " + std::to_string(i) + ")");
        }
        if (rates.cols() != tenor_count())
            throw validation_error("rate rows must have exactly one entry per tenor");
        if (!rates.allFinite()) throw validation_error("rates contain non-finite entries");
    }
};

struct ParameterGroup {
    HullWhiteParams constants;
    PiecewiseConstant theta;  // breakpoints = tenor grid
    double spot_rate = 0.0;   // zero rate at the first tenor point
    int scenario_id = 0;
};

struct ParameterSpace {
    std::vector<double> tenors;
    std::vector<ParameterGroup> groups;
    Mat source_rates;  // s x m, the curves the groups were calibrated to

    std::size_t size() const { return groups.size(); }
};

enum class CurveFormat { csv, json };

namespace detail {

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        if (pos != cell.size()) throw std::invalid_argument("trailing characters");
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
        return v;
    } catch (const std::exception&) {
        throw parse_error("yield-curve file: bad numeric cell at row " + std::to_string(row) +
                          ", column " + std::to_string(col) + " ('" + cell + "')");
    }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

/// CSV layout: header `tenor_years,<t1>,<t2>,...`, then one row per curve:
/// `<row_id>,<rate>,...` with rates as decimals (0.02 = 2%).
inline YieldCurveSet load_yield_curves_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open yield-curve file: " + path);

    YieldCurveSet set;
    set.label = path;
    std::string line;
    std::size_t row = 0;
    std::vector<std::vector<double>> data;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            ++row;
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        if (row == 0) {
            if (cells.size() < 3 || cells[0] != "tenor_years")
                throw parse_error("yield-curve CSV: header must start with 'tenor_years' and list >= 2 tenors");
            for (std::size_t c = 1; c < cells.size(); ++c)
                set.tenors.push_back(detail::parse_cell(cells[c], row, c));
        } else {
            if (cells.size() != set.tenors.size() + 1)
                throw parse_error("yield-curve CSV: row " + std::to_string(row) + " has " +
                                  std::to_string(cells.size() - 1) + " rates, expected " +
                                  std::to_string(set.tenors.size()));
            std::vector<double> r(set.tenors.size());
            for (std::size_t c = 1; c < cells.size(); ++c) r[c - 1] = detail::parse_cell(cells[c], row, c);
            data.push_back(std::move(r));
        }
        ++row;
    }
    if (data.empty()) throw parse_error("yield-curve CSV: no curve rows found in " + path);
    set.rates.resize(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(set.tenors.size()));
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t j = 0; j < data[i].size(); ++j)
            set.rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i][j];
    set.validate();
    return set;
}

/// JSON layout: { "tenors": [...], "rates": [[...], ...] }.
inline YieldCurveSet load_yield_curves_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open yield-curve file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw parse_error("yield-curve JSON: " + std::string(e.what()));
    }
    YieldCurveSet set;
    set.label = path;
    try {
        set.tenors = doc.at("tenors").get<std::vector<double>>();
        const auto& rows = doc.at("rates");
        set.rates.resize(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(set.tenors.size()));
        Eigen::Index i = 0;
        for (const auto& row : rows) {
            if (row.size() != set.tenors.size())
                throw parse_error("yield-curve JSON: row " + std::to_string(i) + " has " +
                                  std::to_string(row.size()) + " rates, expected " +
                                  std::to_string(set.tenors.size()));
            Eigen::Index j = 0;
            for (const auto& v : row) set.rates(i, j++) = v.get<double>();
            ++i;
        }
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("yield-curve JSON: " + std::string(e.what()));
    }
    set.validate();
    return set;
}

inline YieldCurveSet load_yield_curves(const std::string& path, CurveFormat format) {
    return format == CurveFormat::csv ? load_yield_curves_csv(path) : load_yield_curves_json(path);
}

inline void save_yield_curves_csv(const YieldCurveSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw error("cannot write " + path);
    out << "tenor_years";
    for (double t : set.tenors) out << ',' << t;
    out << '\n';
    out.precision(12);
    for (Eigen::Index i = 0; i < set.rates.rows(); ++i) {
        out << i;
        for (Eigen::Index j = 0; j < set.rates.cols(); ++j) out << ',' << set.rates(i, j);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Scenario simulation
// ---------------------------------------------------------------------------

constexpr int kBusinessDaysPerYear = 252;

/// Log-return bootstrap: resample daily log-return vectors of the historical
/// panel with replacement, sum over the horizon, apply to the last observed
/// curve. Requires strictly positive historical rates.
inline YieldCurveSet simulate_yield_curves(const YieldCurveSet& historical, int s,
                                           double horizon_years, std::uint64_t seed) {
    historical.validate();
    if (historical.count() < 2)
        throw validation_error("simulate_yield_curves: need at least two historical observations");
    if (s < 1) throw validation_error("simulate_yield_curves: scenario count must be >= 1");
    if ((historical.rates.array() <= 0.0).any())
        throw validation_error("simulate_yield_curves: log-return bootstrap requires positive rates");

    const Eigen::Index n = historical.count();
    const Eigen::Index m = historical.tenor_count();
    Mat log_returns(n - 1, m);
    for (Eigen::Index i = 0; i + 1 < n; ++i)
        log_returns.row(i) = (historical.rates.row(i + 1).array().log() -
                              historical.rates.row(i).array().log()).matrix();

    const int steps = std::max(1, static_cast<int>(std::lround(horizon_years * kBusinessDaysPerYear)));
    const Vec last = historical.rates.row(n - 1).transpose();

    YieldCurveSet out;
    out.tenors = historical.tenors;
    out.label = historical.label + "|bootstrap";
    out.rates.resize(s, m);

    Rng rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 2);
    Vec acc(m);
    for (int k = 0; k < s; ++k) {
        acc.setZero();
        for (int d = 0; d < steps; ++d) acc += log_returns.row(pick(rng)).transpose();
        out.rates.row(k) = (last.array() * acc.array().exp()).transpose();
    }
    out.validate();
    return out;
}

/// Synthetic daily history driven by lognormal level/slope factors. Intended
/// for demos and tests when no market panel is available.
inline YieldCurveSet make_synthetic_history(const std::vector<double>& tenors, int days,
                                            std::uint64_t seed, double level_vol = 0.006,
                                            double slope_vol = 0.003) {
    if (tenors.size() < 2) throw validation_error("make_synthetic_history: need >= 2 tenors");
    if (days < 2) throw validation_error("make_synthetic_history: need >= 2 days");
    YieldCurveSet set;
    set.tenors = tenors;
    set.label = "synthetic";
    const Eigen::Index m = static_cast<Eigen::Index>(tenors.size());
    set.rates.resize(days, m);

    const double t_max = tenors.back();
    Vec base(m);
    for (Eigen::Index j = 0; j < m; ++j)
        base[j] = 0.012 + 0.015 * (1.0 - std::exp(-1.2 * tenors[j] / t_max));

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double level = 0.0, slope = 0.0;
    for (int d = 0; d < days; ++d) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const double shape = tenors[j] / t_max;
            set.rates(d, j) = base[j] * std::exp(level + slope * (shape - 0.5));
        }
        level += level_vol * normal(rng);
        slope += slope_vol * normal(rng);
    }
    set.validate();
    return set;
}

// ---------------------------------------------------------------------------
// Curve calibration
// ---------------------------------------------------------------------------

/// Fits theta segment by segment so that model zero-coupon bonds reproduce the
/// curve's discount factors at successive tenors, via bracketed root finding
/// with a 1e-10 price tolerance. The short rate starts at the first tenor
/// point's zero rate with the disturbance factor at zero.
inline ParameterGroup calibrate_theta(const std::vector<double>& tenors, const Vec& zero_rates,
                                      const HullWhiteParams& constants, int scenario_id = 0) {
    constants.validate();
    if (tenors.size() < 2) throw validation_error("calibrate_theta: need >= 2 tenors");
    if (zero_rates.size() != static_cast<Eigen::Index>(tenors.size()))
        throw validation_error("calibrate_theta: rate/tenor size mismatch");
    if (!zero_rates.allFinite()) throw validation_error("calibrate_theta: non-finite rates");

    ParameterGroup group;
    group.constants = constants;
    group.scenario_id = scenario_id;
    group.spot_rate = zero_rates[0];
    group.theta.breakpoints = tenors;
    group.theta.values.assign(tenors.size(), 0.0);

    const double r0 = group.spot_rate;
    for (std::size_t j = 0; j < tenors.size(); ++j) {
        const double T = tenors[j];
        const double target = std::exp(-zero_rates[static_cast<Eigen::Index>(j)] * T);
        auto price_mismatch = [&](double theta_j) {
            group.theta.values[j] = theta_j;
            return zero_bond(constants, group.theta, 0.0, T, r0, 0.0) - target;
        };
        const double guess = constants.alpha * zero_rates[static_cast<Eigen::Index>(j)];
        try {
            RootOptions opt;
            opt.f_tol = 1e-10;
            opt.x_tol = 1e-14;
            group.theta.values[j] = bracketed_root(price_mismatch, guess - 0.05, guess + 0.05, opt);
        } catch (const convergence_error& e) {
            throw calibration_error("theta calibration failed at segment " + std::to_string(j) +
                                    " (tenor " + std::to_string(T) + "y): " + e.what());
        }
    }
    return group;
}

/// Calibrates one parameter group per curve row. All groups share the tenor
/// grid and the model constants.
inline ParameterSpace build_parameter_space(const YieldCurveSet& curves,
                                            const HullWhiteParams& constants,
                                            int threads = 1) {
    curves.validate();
    ParameterSpace space;
    space.tenors = curves.tenors;
    space.source_rates = curves.rates;
    space.groups.resize(static_cast<std::size_t>(curves.count()));
    parallel_for(space.groups.size(), threads, [&](std::size_t i) {
        space.groups[i] = calibrate_theta(curves.tenors, curves.rates.row(static_cast<Eigen::Index>(i)).transpose(),
                                          constants, static_cast<int>(i));
    });
    return space;
}

/// Model-implied zero rate, the round-trip inverse of calibrate_theta.
inline double implied_zero_rate(const ParameterGroup& g, double T) {
    return -std::log(zero_bond(g.constants, g.theta, 0.0, T, g.spot_rate, 0.0)) / T;
}

/// Array of {scenario_id, alpha, b, sigma1, sigma2, gamma, theta: [..]}.
inline void save_parameter_space_json(const ParameterSpace& space, const std::string& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& g : space.groups) {
        doc.push_back({{"scenario_id", g.scenario_id},
                       {"alpha", g.constants.alpha},
                       {"b", g.constants.b},
                       {"sigma1", g.constants.sigma1},
                       {"sigma2", g.constants.sigma2},
                       {"gamma", g.constants.gamma},
                       {"spot_rate", g.spot_rate},
                       {"theta", g.theta.values}});
    }
    nlohmann::json wrapper = {{"tenors", space.tenors}, {"groups", std::move(doc)}};
    std::ofstream out(path);
    if (!out) throw error("cannot write " + path);
    out << wrapper.dump(2) << '\n';
}

inline ParameterSpace load_parameter_space_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open parameter-space file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
        ParameterSpace space;
        space.tenors = doc.at("tenors").get<std::vector<double>>();
        for (const auto& j : doc.at("groups")) {
            ParameterGroup g;
            g.scenario_id = j.at("scenario_id").get<int>();
            g.constants.alpha = j.at("alpha").get<double>();
            g.constants.b = j.at("b").get<double>();
            g.constants.sigma1 = j.at("sigma1").get<double>();
            g.constants.sigma2 = j.at("sigma2").get<double>();
            g.constants.gamma = j.at("gamma").get<double>();
            g.spot_rate = j.at("spot_rate").get<double>();
            g.theta.breakpoints = space.tenors;
            g.theta.values = j.at("theta").get<std::vector<double>>();
            if (g.theta.values.size() != space.tenors.size())
                throw parse_error("parameter-space JSON: theta length mismatch for scenario " +
                                  std::to_string(g.scenario_id));
            space.groups.push_back(std::move(g));
        }
        return space;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("parameter-space JSON: " + std::string(e.what()));
    }
}

}  // namespace morrisk
