#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "population.hpp"
#include "rng.hpp"

namespace atsd {

struct Range {
    double lo = -INFINITY;
    double hi = INFINITY;
    bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

// Acceptance bands for a generated population.
struct CalibrationTargets {
    std::optional<Range> mean_y, var_y, corr_xy, corr_zy, mean_x, mean_z;
    bool empty() const noexcept { return !mean_y && !var_y && !corr_xy && !corr_zy && !mean_x && !mean_z; }
};

// Point values the calibration search steers towards.
struct CalibrationGoal {
    std::optional<double> mean_y, var_y, mean_x, var_x, corr_xy, mean_z, var_z, corr_zy;
    int restarts = 4000;
    int refine_steps = 4000;
    std::uint64_t seed = 1;

    bool empty() const noexcept {
        return !mean_y && !var_y && !mean_x && !var_x && !corr_xy && !mean_z && !var_z && !corr_zy;
    }
};

struct TargetCheck {
    std::string name;
    std::optional<double> value;  // empty when the statistic is undefined
    Range range;
    bool pass = false;
};

inline std::vector<TargetCheck> check_targets(const PopulationStats& s, const CalibrationTargets& t) {
    std::vector<TargetCheck> out;
    auto add = [&](const char* name, const std::optional<Range>& r, std::optional<double> v) {
        if (!r) return;
        out.push_back({name, v, *r, v && r->contains(*v)});
    };
    add("mean_y", t.mean_y, s.mean_of(Variable::y));
    add("var_y", t.var_y, s.variance_of(Variable::y));
    add("corr_xy", t.corr_xy, s.corr_xy);
    add("corr_zy", t.corr_zy, s.corr_zy);
    add("mean_x", t.mean_x, s.mean_of(Variable::x));
    add("mean_z", t.mean_z, s.mean_of(Variable::z));
    return out;
}

inline bool targets_met(const PopulationStats& s, const CalibrationTargets& t) {
    for (const auto& c : check_targets(s, t))
        if (!c.pass) return false;
    return true;
}

// Distance of a population's statistics from the goal: relative error in
// units of 10% for means and variances, absolute error in units of 0.03 for
// correlations. Each failed band adds a large penalty.
inline double calibration_score(const PopulationStats& s, const CalibrationGoal& g, const CalibrationTargets& t) {
    double score = 0.0;
    auto rel = [&](const std::optional<double>& goal, double v) {
        if (!goal) return;
        const double e = (v - *goal) / (0.1 * std::fabs(*goal));
        score += e * e;
    };
    auto cor = [&](const std::optional<double>& goal, const std::optional<double>& v) {
        if (!goal) return;
        if (!v) {
            score = std::numeric_limits<double>::infinity();
            return;
        }
        const double e = (*v - *goal) / 0.03;
        score += e * e;
    };
    rel(g.mean_y, s.mean_of(Variable::y));
    rel(g.var_y, s.variance_of(Variable::y));
    rel(g.mean_x, s.mean_of(Variable::x));
    rel(g.var_x, s.variance_of(Variable::x));
    rel(g.mean_z, s.mean_of(Variable::z));
    rel(g.var_z, s.variance_of(Variable::z));
    cor(g.corr_xy, s.corr_xy);
    cor(g.corr_zy, s.corr_zy);
    for (const auto& c : check_targets(s, t))
        if (!c.pass) score += 1000.0;
    return score;
}

namespace detail {

// Search coordinates: (pointer into the spec, lower bound, upper bound).
// Bounds are sampled log-uniformly unless the lower bound is 0, in which
// case the coordinate is uniform.
struct SearchAxis {
    double PopulationSpec::*top = nullptr;
    double AuxiliaryModel::*aux = nullptr;
    AuxiliaryModel PopulationSpec::*which = nullptr;
    double lo = 0.0;
    double hi = 1.0;

    double& ref(PopulationSpec& s) const { return top ? s.*top : (s.*which).*aux; }
};

inline std::vector<SearchAxis> search_axes() {
    std::vector<SearchAxis> axes = {
        {&PopulationSpec::cluster_rate, nullptr, nullptr, 1.0, 40.0},
        {&PopulationSpec::points_per_cluster, nullptr, nullptr, 2.0, 120.0},
        {&PopulationSpec::dispersion, nullptr, nullptr, 0.2, 4.0},
    };
    for (AuxiliaryModel PopulationSpec::*which : {&PopulationSpec::x, &PopulationSpec::z}) {
        axes.push_back({nullptr, &AuxiliaryModel::keep, which, 0.0, 1.0});
        axes.push_back({nullptr, &AuxiliaryModel::extra_per_cluster, which, 0.0, 80.0});
        axes.push_back({nullptr, &AuxiliaryModel::extra_dispersion, which, 0.2, 4.0});
        axes.push_back({nullptr, &AuxiliaryModel::noise_clusters, which, 0.0, 30.0});
        axes.push_back({nullptr, &AuxiliaryModel::noise_points, which, 1.0, 80.0});
        axes.push_back({nullptr, &AuxiliaryModel::noise_dispersion, which, 0.2, 4.0});
        axes.push_back({nullptr, &AuxiliaryModel::background, which, 0.0, 0.3});
    }
    return axes;
}

inline double sample_axis(const SearchAxis& a, DrawRng& rng) {
    const double u = rng.uniform01();
    if (a.lo > 0.0) return a.lo * std::exp(u * std::log(a.hi / a.lo));
    return a.lo + u * (a.hi - a.lo);
}

inline double perturb_axis(const SearchAxis& a, double v, DrawRng& rng) {
    const double step = 0.3 * (2.0 * rng.uniform01() - 1.0);
    double out = a.lo > 0.0 ? v * std::exp(step) : v + step * (a.hi - a.lo) * 0.3;
    if (out < a.lo) out = a.lo;
    if (out > a.hi) out = a.hi;
    return out;
}

}  // namespace detail

struct CalibrationResult {
    PopulationSpec spec;
    PopulationStats stats;
    double score = std::numeric_limits<double>::infinity();
    bool accepted = false;
    long evaluations = 0;
};

// Random restarts over the generator parameters and population seed,
// followed by a greedy local refinement of the best candidate. The grid
// shape of `base` is kept. Deterministic in goal.seed.
inline CalibrationResult calibrate(const PopulationSpec& base, const CalibrationGoal& goal,
                                   const CalibrationTargets& targets,
                                   const std::function<void(const CalibrationResult&)>& progress = {}) {
    if (goal.restarts < 1) throw std::invalid_argument("calibrate: restarts must be >= 1");
    const auto axes = detail::search_axes();
    DrawRng rng(goal.seed, 0x0ca11b);
    CalibrationResult best;
    auto evaluate = [&](const PopulationSpec& s) {
        ++best.evaluations;
        const Population pop = generate_population(s);
        const PopulationStats st = compute_stats(pop);
        const double sc = calibration_score(st, goal, targets);
        if (sc < best.score) {
            best.spec = s;
            best.stats = st;
            best.score = sc;
            best.accepted = targets_met(st, targets);
            if (progress) progress(best);
        }
    };
    for (int r = 0; r < goal.restarts; ++r) {
        PopulationSpec s = base;
        for (const auto& a : axes) a.ref(s) = detail::sample_axis(a, rng);
        s.seed = rng.next();
        evaluate(s);
    }
    for (int k = 0; k < goal.refine_steps; ++k) {
        PopulationSpec s = best.spec;
        const int moves = 1 + static_cast<int>(rng.uniform_below(3));
        for (int i = 0; i < moves; ++i) {
            const auto& a = axes[rng.uniform_below(axes.size())];
            a.ref(s) = detail::perturb_axis(a, a.ref(s), rng);
        }
        if (rng.bernoulli(0.5)) s.seed = rng.next();
        evaluate(s);
    }
    return best;
}

}  // namespace atsd
