#pragma once

// Shared desk-scale problem used across the test suites: a synthetic curve
// panel, a bootstrapped scenario set calibrated to the two-factor model, and
// the ten-year puttable steepener.

#include "morrisk/fem.hpp"
#include "morrisk/instrument.hpp"
#include "morrisk/market_data.hpp"

#include <cstdint>
#include <vector>

namespace morrisk::testing {

inline const std::vector<double>& desk_tenors() {
    static const std::vector<double> tenors{0.25, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 20.0};
    return tenors;
}

inline HullWhiteParams desk_constants() {
    return HullWhiteParams{0.75, 0.04, 0.0035, 0.008, 0.65};
}

struct DeskProblem {
    ParameterSpace space;
    Instrument instrument;
    DomainBounds domain;

    FullModel make_full_model(int order, double dt_days = 20.0) const {
        Mesh mesh = build_mesh(domain, h_for_order(domain, order));
        auto grid = build_time_grid(instrument.key_dates(), instrument.maturity, dt_days / 365.0);
        return FullModel(std::move(mesh), space.groups.front().constants, std::move(grid));
    }
};

inline DeskProblem make_desk_problem(int scenarios, std::uint64_t seed = 20240901ull) {
    DeskProblem desk;
    const auto hist = make_synthetic_history(desk_tenors(), 600, seed);
    const auto curves = simulate_yield_curves(hist, scenarios, 5.0, seed + 1);
    desk.space = build_parameter_space(curves, desk_constants(), 4);
    desk.instrument = make_steepener();
    desk.domain = default_domain(desk.space);
    return desk;
}

}  // namespace morrisk::testing
