#include "morrisk/fem.hpp"

#include "fixtures.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace morrisk;
using morrisk::testing::desk_constants;
using morrisk::testing::make_desk_problem;

namespace {

ParameterGroup constant_theta_group(const HullWhiteParams& c, double theta_value, double spot) {
    ParameterGroup g;
    g.constants = c;
    g.theta.breakpoints = {50.0};
    g.theta.values = {theta_value};
    g.spot_rate = spot;
    return g;
}

}  // namespace

TEST_CASE("mesh: smallest structured grid and refinement") {
    DomainBounds unit{0.0, 1.0, 0.0, 1.0};
    const Mesh coarse = build_mesh(unit, h_for_cells(unit, 1, 1));
    REQUIRE(coarse.node_count() == 4);
    REQUIRE(coarse.element_count() == 2);

    const Mesh two = build_mesh(unit, h_for_cells(unit, 2, 2));
    REQUIRE(two.node_count() == 9);
    REQUIRE(two.element_count() == 8);

    const Mesh four = build_mesh(unit, h_for_cells(unit, 2, 2) / 2.0);
    REQUIRE(four.element_count() == 4 * two.element_count());
}

TEST_CASE("mesh: effective h tracks the target within 5% at production order") {
    DomainBounds bounds{-0.05, 0.12, -0.06, 0.06};
    const double h = h_for_order(bounds, 1600);
    const Mesh mesh = build_mesh(bounds, h);
    REQUIRE(mesh.node_count() >= 1500);
    REQUIRE(mesh.node_count() <= 1700);
    REQUIRE(mesh.effective_h() == Catch::Approx(h).epsilon(0.05));
    for (const auto& e : mesh.elements) {
        const auto g = morrisk::detail::element_geometry(mesh, e);
        REQUIRE(g.area > 0.0);
    }
}

TEST_CASE("mesh: h larger than the domain is rejected") {
    DomainBounds unit{0.0, 1.0, 0.0, 1.0};
    REQUIRE_THROWS_AS(build_mesh(unit, 25.0), validation_error);
}

TEST_CASE("coupon_rate clamps the swap spread") {
    REQUIRE(coupon_rate(0.05, 0.01, 0.03, 0.0) == Catch::Approx(0.03));
    REQUIRE(coupon_rate(0.01, 0.02, 0.03, 0.0) == Catch::Approx(0.0));
    REQUIRE(coupon_rate(0.02, 0.005, 0.03, 0.0) == Catch::Approx(0.015));
    REQUIRE_THROWS_AS(coupon_rate(0.0, 0.0, -0.01, 0.0), validation_error);
}

TEST_CASE("put_payoff is the positive part of strike minus value") {
    REQUIRE(put_payoff(1.0, 0.9) == Catch::Approx(0.1));
    REQUIRE(put_payoff(1.0, 1.2) == Catch::Approx(0.0));
}

TEST_CASE("assemble: vanishing volatilities remove diffusion and cross blocks") {
    DomainBounds bounds{-0.02, 0.08, -0.03, 0.03};
    const Mesh mesh = build_mesh(bounds, h_for_cells(bounds, 8, 8));

    HullWhiteParams no_vol = desk_constants();
    no_vol.sigma1 = 0.0;
    no_vol.sigma2 = 0.0;
    no_vol.gamma = 0.9;
    HullWhiteParams no_vol_no_corr = no_vol;
    no_vol_no_corr.gamma = 0.0;

    const auto a = assemble_operator_split(mesh, no_vol, BoundaryKind::linearity);
    const auto b = assemble_operator_split(mesh, no_vol_no_corr, BoundaryKind::linearity);
    REQUIRE((Mat(a.op_fixed) - Mat(b.op_fixed)).cwiseAbs().maxCoeff() == 0.0);

    // and against an assembly with diffusion present the blocks differ
    const auto c = assemble_operator_split(mesh, desk_constants(), BoundaryKind::linearity);
    REQUIRE((Mat(a.op_fixed) - Mat(c.op_fixed)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("assemble succeeds with the reference constants at production order") {
    DomainBounds bounds{-0.05, 0.12, -0.06, 0.06};
    const Mesh mesh = build_mesh(bounds, h_for_order(bounds, 1600));
    const auto group = constant_theta_group(desk_constants(), 0.015, 0.01);
    const auto [A, B] = assemble(mesh, group, 0.0, 20.0 / 365.0);
    REQUIRE(A.rows() == mesh.node_count());
    REQUIRE(Mat(A).allFinite());
    REQUIRE(Mat(B).allFinite());
}

TEST_CASE("assemble: lumped-inverse operator action converges to the pde operator at rate ~2") {
    // smooth test function and hand-computed operator image
    const HullWhiteParams c = desk_constants();
    const double theta = 0.01;
    const auto v_fn = [](double r, double u) { return std::sin(3.0 * r + 2.0 * u) + r * r - 0.5 * u * u; };
    const auto lv_fn = [&](double r, double u) {
        const double s = std::sin(3.0 * r + 2.0 * u);
        const double co = std::cos(3.0 * r + 2.0 * u);
        const double vr = 3.0 * co + 2.0 * r;
        const double vu = 2.0 * co - u;
        const double vrr = -9.0 * s + 2.0;
        const double vuu = -4.0 * s - 1.0;
        const double vru = -6.0 * s;
        return (theta + u - c.alpha * r) * vr - c.b * u * vu + 0.5 * c.sigma1 * c.sigma1 * vrr +
               0.5 * c.sigma2 * c.sigma2 * vuu + c.gamma * c.sigma1 * c.sigma2 * vru -
               r * (s + r * r - 0.5 * u * u);
    };

    DomainBounds bounds{-0.5, 0.5, -0.5, 0.5};
    std::vector<double> errs;
    std::vector<int> cells{16, 32, 64};
    for (int n : cells) {
        const Mesh mesh = build_mesh(bounds, h_for_cells(bounds, n, n));
        const auto split = assemble_operator_split(mesh, c, BoundaryKind::linearity);
        Vec v(mesh.node_count());
        for (int i = 0; i < mesh.node_count(); ++i) v[i] = v_fn(mesh.nodes[i][0], mesh.nodes[i][1]);

        // (A - B)/dt = -(L0 + theta Lt) on interior rows
        const Vec weak = -(split.op_fixed * v + theta * (split.op_theta * v));
        const Vec lumped = split.mass * Vec::Ones(mesh.node_count());

        double err = 0.0;
        for (int j = 2; j <= mesh.nu - 2; ++j) {
            for (int i = 2; i <= mesh.nr - 2; ++i) {
                const int idx = mesh.node_index(i, j);
                const double approx = -weak[idx] / lumped[idx];
                err = std::max(err, std::abs(approx - lv_fn(mesh.nodes[idx][0], mesh.nodes[idx][1])));
            }
        }
        errs.push_back(err);
    }
    const double rate1 = std::log2(errs[0] / errs[1]);
    const double rate2 = std::log2(errs[1] / errs[2]);
    REQUIRE(rate1 > 1.7);
    REQUIRE(rate2 > 1.7);
}

TEST_CASE("time grid contains key dates exactly with bounded steps") {
    const Instrument inst = make_steepener();
    const auto grid = build_time_grid(inst.key_dates(), inst.maturity, 20.0 / 365.0);
    REQUIRE(grid.front() == 0.0);
    REQUIRE(grid.back() == Catch::Approx(10.0));
    for (double d : inst.key_dates()) {
        bool hit = false;
        for (double t : grid) hit = hit || std::abs(t - d) < 1e-12;
        REQUIRE(hit);
    }
    REQUIRE(max_step(grid) <= 20.0 / 365.0 + 1e-12);
}

TEST_CASE("solve: zero-rate limit returns the nominal") {
    HullWhiteParams c = desk_constants();
    c.sigma1 = 1e-6;
    c.sigma2 = 1e-6;
    DomainBounds bounds{-1e-4, 1e-4, -1e-4, 1e-4};
    const Mesh mesh = build_mesh(bounds, h_for_cells(bounds, 8, 8));
    FullModel model(mesh, c, build_time_grid({}, 1.0, 0.05));

    Instrument zcb;
    zcb.maturity = 1.0;
    zcb.nominal = 1.0;
    const auto group = constant_theta_group(c, 0.0, 0.0);
    const auto result = model.solve(zcb, group);
    REQUIRE(result.value_at_spot == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("solve: a dominant put strike floors the surface") {
    const auto desk = make_desk_problem(3);
    const FullModel model = desk.make_full_model(144, 30.0);

    Instrument inst;
    inst.maturity = 2.0;
    inst.puts = {{1.0, 50.0}};  // unattainably high strike
    const auto result = model.solve(inst, desk.space.groups.front());
    // after the put date every node carries at least the strike
    for (const auto& surf : result.trajectory) {
        if (surf.t > 1.0 - 1e-9) continue;
        REQUIRE(surf.values.minCoeff() >= 50.0 * std::exp(-0.1));
    }
    REQUIRE(result.value_at_spot > 40.0);
}

TEST_CASE("solve: discounting keeps interior values at or below nominal") {
    HullWhiteParams c = desk_constants();
    DomainBounds bounds{0.001, 0.12, -0.02, 0.02};
    const Mesh mesh = build_mesh(bounds, h_for_cells(bounds, 20, 12));
    FullModel model(mesh, c, build_time_grid({}, 5.0, 20.0 / 365.0));

    Instrument zcb;
    zcb.maturity = 5.0;
    const auto group = constant_theta_group(c, 0.02, 0.02);
    const auto result = model.solve(zcb, group);
    const auto& v = result.trajectory.front().values;
    for (int j = 2; j <= mesh.nu - 2; ++j)
        for (int i = 2; i <= mesh.nr - 2; ++i)
            REQUIRE(v[mesh.node_index(i, j)] <= 1.0 + 1e-9);
}

TEST_CASE("solve: adding a put schedule never lowers the value surface") {
    const auto desk = make_desk_problem(2);
    const FullModel model = desk.make_full_model(169, 30.0);
    const auto& group = desk.space.groups.front();

    Instrument with_puts = desk.instrument;
    Instrument without_puts = desk.instrument;
    without_puts.puts.clear();

    const auto a = model.solve(with_puts, group);
    const auto b = model.solve(without_puts, group);
    REQUIRE(((a.trajectory.front().values - b.trajectory.front().values).array() >= -1e-12).all());
}

TEST_CASE("solve: event order applies the coupon before the put") {
    // a fixed coupon at the put date raises the continuation value above the
    // strike, so exercising after the coupon changes nothing; if the put were
    // applied first the floor would bind
    const auto desk = make_desk_problem(2);
    HullWhiteParams c = desk_constants();
    DomainBounds bounds{-0.01, 0.06, -0.02, 0.02};
    const Mesh mesh = build_mesh(bounds, h_for_cells(bounds, 12, 10));
    FullModel model(mesh, c, build_time_grid({1.0}, 2.0, 0.05));
    const auto group = constant_theta_group(c, 0.005, 0.01);

    Instrument inst;
    inst.maturity = 2.0;
    inst.fixed_coupons = {{1.0, 0.5}};   // huge coupon at the put date
    inst.puts = {{1.0, 1.2}};

    const auto with_put = model.solve(inst, group);
    Instrument no_put = inst;
    no_put.puts.clear();
    const auto baseline = model.solve(no_put, group);

    // continuation + coupon exceeds 1.2 across the domain, so the put is idle
    REQUIRE(with_put.value_at_spot == Catch::Approx(baseline.value_at_spot).epsilon(1e-10));
}

TEST_CASE("solve: missing event date raises a schedule error") {
    const auto desk = make_desk_problem(2);
    HullWhiteParams c = desk_constants();
    DomainBounds bounds{-0.01, 0.06, -0.02, 0.02};
    const Mesh mesh = build_mesh(bounds, h_for_cells(bounds, 6, 6));
    FullModel model(mesh, c, build_time_grid({}, 2.0, 0.25));  // grid unaware of the put date

    Instrument inst;
    inst.maturity = 2.0;
    inst.puts = {{0.9, 1.0}};
    REQUIRE_THROWS_AS(model.solve(inst, desk.space.groups.front()), schedule_error);
}

TEST_CASE("steepener pricing at desk scale produces sane values") {
    const auto desk = make_desk_problem(4);
    const FullModel model = desk.make_full_model(400);
    for (const auto& group : desk.space.groups) {
        const auto result = model.solve(desk.instrument, group);
        REQUIRE(result.value_at_spot > 0.7);
        REQUIRE(result.value_at_spot < 1.6);
        REQUIRE(std::isfinite(result.value_at_spot));
    }
}

TEST_CASE("instrument json round-trip") {
    const Instrument inst = make_steepener();
    const auto path = (std::filesystem::temp_directory_path() / "steepener.json").string();
    save_instrument_json(inst, path);
    const Instrument loaded = load_instrument_json(path);
    REQUIRE(loaded.maturity == inst.maturity);
    REQUIRE(loaded.fixed_coupons.size() == inst.fixed_coupons.size());
    REQUIRE(loaded.puts.size() == inst.puts.size());
    REQUIRE(loaded.floating.has_value());
    REQUIRE(loaded.floating->cap == inst.floating->cap);
    REQUIRE(loaded.key_dates() == inst.key_dates());
}
