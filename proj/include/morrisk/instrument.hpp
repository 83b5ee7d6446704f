#pragma once

// Instrument schedule: fixed coupons, capped/floored floating coupons paying
// the spread of two constant-maturity swap rates, and discrete put rights.

#include "morrisk/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace morrisk {

/// Capped/floored spread coupon: min(cap, max(floor, cms_a - cms_b)).
inline double coupon_rate(double cms_a, double cms_b, double cap, double floor) {
    if (cap < floor) throw validation_error("coupon_rate: cap must be >= floor");
    return std::min(cap, std::max(floor, cms_a - cms_b));
}

/// Put payoff (K - V)^+.
inline double put_payoff(double strike, double value) {
    return std::max(strike - value, 0.0);
}

struct FixedCoupon {
    double t = 0.0;
    double rate = 0.0;
};

struct FloatingRule {
    double cap = 0.03;
    double floor = 0.0;
    int tenor_a = 10;       // years, first swap rate
    int tenor_b = 2;        // years, second swap rate
    double start_year = 4;  // first floating coupon date
};

struct PutRight {
    double t = 0.0;
    double strike = 1.0;
};

/// Maps (t, r, u) to the two reference swap rates used in the floating
/// coupon. The default binds the affine bond analytics of the pricing model;
/// tests may substitute a synthetic rule.
using ReferenceRateFn = std::function<std::pair<double, double>(double t, double r, double u)>;

struct Instrument {
    double maturity = 10.0;
    double nominal = 1.0;
    std::vector<FixedCoupon> fixed_coupons;
    std::optional<FloatingRule> floating;
    std::vector<PutRight> puts;

    void validate() const {
        if (!(maturity > 0.0)) throw validation_error("instrument maturity must be positive");
        if (!(nominal > 0.0)) throw validation_error("instrument nominal must be positive");
        for (const auto& c : fixed_coupons)
            if (!(c.t > 0.0 && c.t <= maturity))
                throw validation_error("fixed coupon date outside (0, maturity]");
        for (const auto& p : puts)
            if (!(p.t > 0.0 && p.t <= maturity))
                throw validation_error("put date outside (0, maturity]");
        if (floating) {
            if (floating->cap < floating->floor)
                throw validation_error("floating rule: cap must be >= floor");
            if (floating->tenor_a < 1 || floating->tenor_b < 1)
                throw validation_error("floating rule: swap tenors must be >= 1 year");
        }
    }

    /// All dates the time grid must hit exactly, sorted ascending.
    std::vector<double> key_dates() const {
        std::vector<double> dates;
        for (const auto& c : fixed_coupons) dates.push_back(c.t);
        for (const auto& p : puts) dates.push_back(p.t);
        if (floating)
            for (double t = floating->start_year; t <= maturity + 1e-12; t += 1.0)
                dates.push_back(std::min(t, maturity));
        dates.push_back(maturity);
        std::sort(dates.begin(), dates.end());
        dates.erase(std::unique(dates.begin(), dates.end(),
                                [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                    dates.end());
        return dates;
    }

    /// Accrual of the coupon paid at date t: spacing to the previous coupon
    /// date (or issue for the first coupon).
    double accrual_at(double t) const {
        double prev = 0.0;
        for (const auto& d : coupon_dates())
            if (d < t - 1e-12) prev = std::max(prev, d);
        return t - prev;
    }

    std::vector<double> coupon_dates() const {
        std::vector<double> dates;
        for (const auto& c : fixed_coupons) dates.push_back(c.t);
        if (floating)
            for (double t = floating->start_year; t <= maturity + 1e-12; t += 1.0)
                dates.push_back(std::min(t, maturity));
        std::sort(dates.begin(), dates.end());
        dates.erase(std::unique(dates.begin(), dates.end(),
                                [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                    dates.end());
        return dates;
    }

    const FixedCoupon* fixed_coupon_at(double t) const {
        for (const auto& c : fixed_coupons)
            if (std::abs(c.t - t) < 1e-12) return &c;
        return nullptr;
    }

    bool floating_coupon_at(double t) const {
        if (!floating) return false;
        for (double d = floating->start_year; d <= maturity + 1e-12; d += 1.0)
            if (std::abs(std::min(d, maturity) - t) < 1e-12) return true;
        return false;
    }

    const PutRight* put_at(double t) const {
        for (const auto& p : puts)
            if (std::abs(p.t - t) < 1e-12) return &p;
        return nullptr;
    }
};

/// Ten-year puttable steepener: fixed coupons for the first years, capped/
/// floored CMS spread afterwards, annual puts at par until one year before
/// maturity.
inline Instrument make_steepener(double maturity = 10.0, double fixed_rate = 0.04,
                                 int fixed_years = 3, double cap = 0.03, double floor = 0.0,
                                 int tenor_a = 10, int tenor_b = 2, double put_strike = 1.0) {
    Instrument inst;
    inst.maturity = maturity;
    inst.nominal = 1.0;
    for (int y = 1; y <= fixed_years; ++y) inst.fixed_coupons.push_back({static_cast<double>(y), fixed_rate});
    inst.floating = FloatingRule{cap, floor, tenor_a, tenor_b, static_cast<double>(fixed_years + 1)};
    for (int y = 1; y <= static_cast<int>(maturity) - 1; ++y)
        inst.puts.push_back({static_cast<double>(y), put_strike});
    inst.validate();
    return inst;
}

inline Instrument load_instrument_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open instrument file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
        Instrument inst;
        inst.maturity = doc.at("maturity").get<double>();
        inst.nominal = doc.value("nominal", 1.0);
        for (const auto& c : doc.value("fixed_coupons", nlohmann::json::array()))
            inst.fixed_coupons.push_back({c.at("t").get<double>(), c.at("rate").get<double>()});
        if (doc.contains("floating")) {
            const auto& f = doc.at("floating");
            inst.floating = FloatingRule{f.at("cap").get<double>(), f.at("floor").get<double>(),
                                         f.at("tenor_a").get<int>(), f.at("tenor_b").get<int>(),
                                         f.at("start_year").get<double>()};
        }
        for (const auto& p : doc.value("puts", nlohmann::json::array()))
            inst.puts.push_back({p.at("t").get<double>(), p.at("strike").get<double>()});
        inst.validate();
        return inst;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("instrument JSON: " + std::string(e.what()));
    }
}

inline void save_instrument_json(const Instrument& inst, const std::string& path) {
    nlohmann::json doc;
    doc["maturity"] = inst.maturity;
    doc["nominal"] = inst.nominal;
    doc["fixed_coupons"] = nlohmann::json::array();
    for (const auto& c : inst.fixed_coupons)
        doc["fixed_coupons"].push_back({{"t", c.t}, {"rate", c.rate}});
    if (inst.floating)
        doc["floating"] = {{"cap", inst.floating->cap},
                           {"floor", inst.floating->floor},
                           {"tenor_a", inst.floating->tenor_a},
                           {"tenor_b", inst.floating->tenor_b},
                           {"start_year", inst.floating->start_year}};
    doc["puts"] = nlohmann::json::array();
    for (const auto& p : inst.puts) doc["puts"].push_back({{"t", p.t}, {"strike", p.strike}});
    std::ofstream out(path);
    if (!out) throw error("cannot write " + path);
    out << doc.dump(2) << '\n';
}

}  // namespace morrisk
