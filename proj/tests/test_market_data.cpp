#include "morrisk/market_data.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace morrisk;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

const std::vector<double> kDeskTenors{0.25, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 20.0};

}  // namespace

TEST_CASE("csv loader echoes a well-formed file") {
    const auto path = write_temp("curves_ok.csv",
                                 "tenor_years,1,2,5,10\n"
                                 "0,0.010,0.012,0.015,0.018\n"
                                 "1,0.011,0.013,0.016,0.019\n"
                                 "2,0.009,0.011,0.014,0.017\n");
    const auto set = load_yield_curves(path, CurveFormat::csv);
    REQUIRE(set.count() == 3);
    REQUIRE(set.tenor_count() == 4);
    REQUIRE(set.tenors == std::vector<double>{1.0, 2.0, 5.0, 10.0});
    REQUIRE(set.rates(1, 2) == Catch::Approx(0.016));
}

TEST_CASE("csv loader reports the offending cell") {
    const auto path = write_temp("curves_nan.csv",
                                 "tenor_years,1,2\n"
                                 "0,0.01,nan_not_a_rate\n");
    try {
        load_yield_curves(path, CurveFormat::csv);
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("row 1") != std::string::npos);
        REQUIRE(msg.find("column 2") != std::string::npos);
    }
}

TEST_CASE("csv loader rejects non-increasing tenors") {
    const auto path = write_temp("curves_bad_tenors.csv",
                                 "tenor_years,2,1\n"
                                 "0,0.01,0.02\n");
    REQUIRE_THROWS_AS(load_yield_curves(path, CurveFormat::csv), validation_error);
}

TEST_CASE("a 21-point tenor grid loads with m = 21") {
    std::string header = "tenor_years";
    std::string row = "0";
    const double tenors[] = {1.0 / 365, 0.25, 0.5,  0.75, 1,  2,  3,  4,  5,  6, 7,
                             8,         9,    10,   12,   15, 20, 25, 30, 40, 50};
    for (double t : tenors) {
        header += "," + std::to_string(t);
        row += ",0.02";
    }
    const auto path = write_temp("curves_21.csv", header + "\n" + row + "\n");
    const auto set = load_yield_curves(path, CurveFormat::csv);
    REQUIRE(set.tenor_count() == 21);
}

TEST_CASE("json loader round-trips the csv content") {
    const auto path = write_temp("curves.json",
                                 R"({"tenors": [1, 5], "rates": [[0.01, 0.02], [0.011, 0.021]]})");
    const auto set = load_yield_curves(path, CurveFormat::json);
    REQUIRE(set.count() == 2);
    REQUIRE(set.rates(0, 1) == Catch::Approx(0.02));
}

TEST_CASE("bootstrap of identical history reproduces the last curve") {
    YieldCurveSet hist;
    hist.tenors = {1.0, 5.0};
    hist.rates.resize(4, 2);
    for (int i = 0; i < 4; ++i) {
        hist.rates(i, 0) = 0.02;
        hist.rates(i, 1) = 0.025;
    }
    const auto sim = simulate_yield_curves(hist, 7, 5.0, 42);
    REQUIRE(sim.count() == 7);
    for (int i = 0; i < 7; ++i) {
        REQUIRE(sim.rates(i, 0) == Catch::Approx(0.02).epsilon(1e-12));
        REQUIRE(sim.rates(i, 1) == Catch::Approx(0.025).epsilon(1e-12));
    }
}

TEST_CASE("bootstrap is a pure function of history, count, horizon and seed") {
    const auto hist = make_synthetic_history(kDeskTenors, 300, 7);
    const auto a = simulate_yield_curves(hist, 25, 5.0, 1234);
    const auto b = simulate_yield_curves(hist, 25, 5.0, 1234);
    REQUIRE(a.rates == b.rates);
    const auto c = simulate_yield_curves(hist, 25, 5.0, 1235);
    REQUIRE(a.rates != c.rates);
}

TEST_CASE("bootstrap rejects too-short history") {
    YieldCurveSet hist;
    hist.tenors = {1.0, 5.0};
    hist.rates.resize(1, 2);
    hist.rates << 0.02, 0.025;
    REQUIRE_THROWS_AS(simulate_yield_curves(hist, 3, 1.0, 0), validation_error);
}

TEST_CASE("flat curve with vanishing volatility calibrates theta to alpha times rate") {
    HullWhiteParams constants;
    constants.alpha = 0.75;
    constants.b = 0.04;
    constants.sigma1 = 1e-9;
    constants.sigma2 = 1e-9;
    constants.gamma = 0.3;
    const double r = 0.02;
    Vec rates = Vec::Constant(static_cast<Eigen::Index>(kDeskTenors.size()), r);
    const auto group = calibrate_theta(kDeskTenors, rates, constants);
    for (double v : group.theta.values) REQUIRE(v == Catch::Approx(constants.alpha * r).margin(1e-8));
}

TEST_CASE("calibrated model reprices the input discount factors") {
    HullWhiteParams constants;  // defaults carry realistic volatilities
    const auto hist = make_synthetic_history(kDeskTenors, 400, 11);
    const auto curves = simulate_yield_curves(hist, 5, 5.0, 99);
    for (int i = 0; i < curves.count(); ++i) {
        const Vec row = curves.rates.row(i).transpose();
        const auto group = calibrate_theta(kDeskTenors, row, constants, i);
        for (std::size_t j = 0; j < kDeskTenors.size(); ++j) {
            const double T = kDeskTenors[j];
            const double df_in = std::exp(-row[static_cast<Eigen::Index>(j)] * T);
            const double df_model =
                zero_bond(constants, group.theta, 0.0, T, group.spot_rate, 0.0);
            REQUIRE(df_model == Catch::Approx(df_in).epsilon(1e-8));
        }
    }
}

TEST_CASE("calibration against an independent quadrature-based root finder") {
    // oracle: recompute theta by bisection on a bond price whose drift
    // integral is evaluated numerically instead of in closed form
    HullWhiteParams constants;
    const auto hist = make_synthetic_history(kDeskTenors, 250, 3);
    const Vec row = hist.rates.row(249).transpose();
    const auto group = calibrate_theta(kDeskTenors, row, constants);

    PiecewiseConstant theta_probe = group.theta;
    const double r0 = row[0];
    for (std::size_t j = 0; j < kDeskTenors.size(); ++j) {
        const double T = kDeskTenors[j];
        const double target = std::exp(-row[static_cast<Eigen::Index>(j)] * T);
        auto price = [&](double theta_j) {
            theta_probe.values[j] = theta_j;
            const double drift = integrate(
                [&](double s) { return theta_probe.at(s) * bond_loading_r(constants.alpha, T - s); },
                0.0, T, 32, 0.25);
            const double var = bond_variance_term(constants, 0.0, T);
            return std::exp(-drift + var - bond_loading_r(constants.alpha, T) * r0) - target;
        };
        double lo = -0.5, hi = 0.5;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (price(lo) * price(mid) <= 0.0)
                hi = mid;
            else
                lo = mid;
        }
        const double theta_oracle = 0.5 * (lo + hi);
        REQUIRE(group.theta.values[j] == Catch::Approx(theta_oracle).margin(2e-6));
        theta_probe.values[j] = group.theta.values[j];
    }
}

TEST_CASE("reference model constants are accepted") {
    HullWhiteParams constants{0.75, 0.04, 0.0035, 0.008, 0.65};
    REQUIRE_NOTHROW(constants.validate());
    Vec rates(8);
    rates << 0.010, 0.012, 0.013, 0.014, 0.016, 0.017, 0.018, 0.020;
    const auto group = calibrate_theta(kDeskTenors, rates, constants, 7);
    REQUIRE(group.scenario_id == 7);
    REQUIRE(group.theta.values.size() == kDeskTenors.size());
    for (double v : group.theta.values) REQUIRE(std::isfinite(v));
}

TEST_CASE("parameter space preserves the scenario count and round-trips JSON") {
    const auto hist = make_synthetic_history(kDeskTenors, 260, 21);
    const auto curves = simulate_yield_curves(hist, 12, 5.0, 5);
    const auto space = build_parameter_space(curves, HullWhiteParams{}, 2);
    REQUIRE(space.size() == 12);
    for (std::size_t i = 0; i < space.size(); ++i)
        REQUIRE(space.groups[i].scenario_id == static_cast<int>(i));

    const auto path = (std::filesystem::temp_directory_path() / "space.json").string();
    save_parameter_space_json(space, path);
    const auto loaded = load_parameter_space_json(path);
    REQUIRE(loaded.size() == space.size());
    REQUIRE(loaded.tenors == space.tenors);
    for (std::size_t i = 0; i < space.size(); ++i) {
        REQUIRE(loaded.groups[i].theta.values == space.groups[i].theta.values);
        REQUIRE(loaded.groups[i].spot_rate == space.groups[i].spot_rate);
    }
}

TEST_CASE("implied zero rates round-trip through the calibrated model") {
    const auto hist = make_synthetic_history(kDeskTenors, 300, 17);
    const auto curves = simulate_yield_curves(hist, 3, 10.0, 77);
    const auto space = build_parameter_space(curves, HullWhiteParams{});
    for (const auto& g : space.groups)
        for (std::size_t j = 0; j < kDeskTenors.size(); ++j) {
            const double y_in = curves.rates(g.scenario_id, static_cast<Eigen::Index>(j));
            REQUIRE(implied_zero_rate(g, kDeskTenors[j]) == Catch::Approx(y_in).margin(1e-9));
        }
}
