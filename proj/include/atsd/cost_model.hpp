#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "designs.hpp"
#include "population.hpp"

namespace atsd {

struct CostSpec {
    double c_aux = 1.0;
    double c_tar = 10.0;

    double ratio() const noexcept { return c_tar / c_aux; }
    void validate() const {
        if (!(c_aux > 0.0) || !(c_tar > 0.0) || !std::isfinite(c_aux) || !std::isfinite(c_tar))
            throw std::invalid_argument("cost: c_aux and c_tar must be positive");
    }
};

// E(n_y) = (m/M) Σ_h (n_2h1 + d n_2h1 p_h): each initial satisfier adds d
// target measurements; p_h is the condition rarity of PSU h.
inline double expected_ny(const std::vector<double>& rarity, int m, int n2h1, int d) {
    if (rarity.empty()) throw std::invalid_argument("expected_ny: missing rarity statistics");
    const double M = static_cast<double>(rarity.size());
    double sum = 0.0;
    for (double p : rarity) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("expected_ny: rarity outside [0, 1]");
        sum += n2h1 + static_cast<double>(d) * n2h1 * p;
    }
    return m / M * sum;
}

inline double expected_ny(const PopulationStats& stats, int m, int n2h1, int d) {
    return expected_ny(stats.rarity, m, n2h1, d);
}

namespace detail {

inline int round_size(double raw, const char* what) {
    if (!std::isfinite(raw) || raw < 0.5)
        throw std::invalid_argument(std::string(what) + ": budget too small for a single unit");
    return std::max(1, static_cast<int>(std::lround(raw)));
}

inline void check_budget(double budget, double c_tar) {
    if (!(budget > 0.0)) throw std::invalid_argument("cost matching: budget must be positive");
    if (!(c_tar > 0.0)) throw std::invalid_argument("cost matching: c_tar must be positive");
}

// (1/M) Σ_h (1 + d p_h): expected target measurements per initial unit of a
// sequential sample in a randomly selected PSU.
inline double mean_growth(const std::vector<double>& p_h, int d) {
    double g = 0.0;
    for (double p : p_h) g += 1.0 + d * p;
    return g / static_cast<double>(p_h.size());
}

}  // namespace detail

// ATS initial size n1 ≈ budget / (c_tar (m/M) Σ_h (1 + d1 p_h)).
inline int match_ats(double budget, double c_tar, int m, int M, int d_ats, const std::vector<double>& p_h) {
    detail::check_budget(budget, c_tar);
    if (static_cast<int>(p_h.size()) != M || m < 1 || m > M) throw std::invalid_argument("match_ats: bad PSU counts");
    return detail::round_size(budget / (c_tar * m * detail::mean_growth(p_h, d_ats)), "match_ats");
}

// Two-stage n ≈ budget / (m c_tar).
inline int match_two_stage(double budget, int m, double c_tar) {
    detail::check_budget(budget, c_tar);
    if (m < 1) throw std::invalid_argument("match_two_stage: m must be >= 1");
    return detail::round_size(budget / (m * c_tar), "match_two_stage");
}

// SRSWOR n ≈ budget / c_tar.
inline int match_srs(double budget, double c_tar) {
    detail::check_budget(budget, c_tar);
    return detail::round_size(budget / c_tar, "match_srs");
}

// Regs phase-2 size n_ytR ≈ E(n_y) / m.
inline int match_regs(double expected_ny_value, int m) {
    if (!(expected_ny_value > 0.0) || m < 1) throw std::invalid_argument("match_regs: need E(n_y) > 0 and m >= 1");
    return detail::round_size(expected_ny_value / m, "match_regs");
}

// Splits `total` units over `slots` first-stage slots as evenly as possible;
// earlier slots take the remainder.
inline std::vector<int> spread(int total, int slots) {
    if (slots < 1 || total < slots) throw std::invalid_argument("spread: need at least one unit per slot");
    std::vector<int> out(static_cast<std::size_t>(slots), total / slots);
    for (int k = 0; k < total % slots; ++k) ++out[static_cast<std::size_t>(k)];
    return out;
}

struct EffortPlan {
    CostSpec cost;
    AtsdParams atsd;
    double expected_ny = 0.0;
    double budget = 0.0;  // expected ATSD cost, the common target

    struct Ats {
        int m = 0;
        int n1 = 0;         // nominal initial size
        int n1_derived = 0; // value the matching formula gives
        int d1 = 0;
        bool given = false; // n1 fixed by configuration
        std::vector<int> slots;
        double expected_cost = 0.0;
    } ats;

    struct Conventional {
        int n = 0;                 // nominal size per slot (or total for SRS)
        std::vector<int> slots;    // realised per-slot sizes
        double expected_cost = 0.0;
    };
    Conventional two_stage;
    Conventional srs;
    Conventional regs;  // phase-2 sizes; phase 1 mirrors ATSD

    double atsd_expected_cost() const noexcept { return budget; }
    // Largest |expected cost - budget| over the matched designs.
    double max_gap() const noexcept {
        return std::max({std::fabs(ats.expected_cost - budget), std::fabs(two_stage.expected_cost - budget),
                         std::fabs(srs.expected_cost - budget), std::fabs(regs.expected_cost - budget)});
    }
};

struct EffortRequest {
    CostSpec cost;
    AtsdParams atsd;
    int ats_d1 = 0;
    int ats_n1 = 0;  // 0 derives n1 from the budget
};

// Matches every comparison design to the expected ATSD cost. Totals are
// rounded once and spread across slots, so the target-measurement count of
// each design is the nearest integer to its matched value.
inline EffortPlan make_effort_plan(const Population& pop, const EffortRequest& req) {
    req.cost.validate();
    req.atsd.validate(pop);
    if (req.ats_d1 < 0) throw std::invalid_argument("effort plan: ATS d1 must be >= 0");
    EffortPlan plan;
    plan.cost = req.cost;
    plan.atsd = req.atsd;
    const int M = pop.psu_count();
    const int m = req.atsd.m;
    const double c_aux = req.cost.c_aux, c_tar = req.cost.c_tar;

    const PopulationStats cond_stats = compute_stats(pop, req.atsd.condition);
    const PopulationStats y_stats = compute_stats(pop, Condition{Variable::y, false, 0.0});
    plan.expected_ny = expected_ny(cond_stats, m, req.atsd.n2h1, req.atsd.d);
    double n_aux = 0.0;
    for (int h = 0; h < M; ++h) n_aux += req.atsd.n1h[static_cast<std::size_t>(h)];
    n_aux *= static_cast<double>(m) / M;
    plan.budget = c_aux * n_aux + c_tar * plan.expected_ny;

    int min_nh = pop.psu_size(0);
    for (int h = 1; h < M; ++h) min_nh = std::min(min_nh, pop.psu_size(h));
    int min_n1h = req.atsd.n1h[0];
    for (int v : req.atsd.n1h) min_n1h = std::min(min_n1h, v);

    auto check_slots = [](const std::vector<int>& s, int bound, const char* what) {
        for (int v : s)
            if (v < 1 || v > bound) throw std::invalid_argument(std::string("effort plan: ") + what + " exceeds frame");
    };

    // ATS
    plan.ats.m = m;
    plan.ats.d1 = req.ats_d1;
    plan.ats.n1_derived = match_ats(plan.budget, c_tar, m, M, req.ats_d1, y_stats.rarity);
    const double growth = detail::mean_growth(y_stats.rarity, req.ats_d1);
    if (req.ats_n1 > 0) {
        plan.ats.given = true;
        plan.ats.n1 = req.ats_n1;
        plan.ats.slots.assign(static_cast<std::size_t>(m), req.ats_n1);
    } else {
        const int total = detail::round_size(plan.budget / (c_tar * growth), "ATS plan");
        plan.ats.n1 = plan.ats.n1_derived;
        plan.ats.slots = spread(std::max(total, m), m);
    }
    check_slots(plan.ats.slots, min_nh, "ATS n1");
    double ats_units = 0.0;
    for (int v : plan.ats.slots) ats_units += v;
    plan.ats.expected_cost = c_tar * growth * ats_units;

    // Two-stage
    plan.two_stage.n = match_two_stage(plan.budget, m, c_tar);
    plan.two_stage.slots = spread(std::max(match_srs(plan.budget, c_tar), m), m);
    check_slots(plan.two_stage.slots, min_nh, "two-stage n");
    plan.two_stage.expected_cost = 0.0;
    for (int v : plan.two_stage.slots) plan.two_stage.expected_cost += c_tar * v;

    // SRSWOR
    plan.srs.n = match_srs(plan.budget, c_tar);
    if (plan.srs.n > pop.size()) throw std::invalid_argument("effort plan: SRSWOR n exceeds N");
    plan.srs.slots = {plan.srs.n};
    plan.srs.expected_cost = c_tar * plan.srs.n;

    // Regs: same phase 1 as ATSD, phase 2 matched to E(n_y)
    plan.regs.n = match_regs(plan.expected_ny, m);
    plan.regs.slots = spread(std::max(detail::round_size(plan.expected_ny, "Regs plan"), m), m);
    check_slots(plan.regs.slots, min_n1h, "Regs n_ytR");
    double regs_units = 0.0;
    for (int v : plan.regs.slots) regs_units += v;
    plan.regs.expected_cost = c_aux * n_aux + c_tar * regs_units;
    return plan;
}

}  // namespace atsd
