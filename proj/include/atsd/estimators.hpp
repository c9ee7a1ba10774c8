#pragma once

#include <cmath>
#include <optional>
#include <string_view>
#include <vector>

#include "designs.hpp"
#include "murthy.hpp"
#include "numeric.hpp"

namespace atsd {

// Per-slot quantities of one ATSD draw, computed once and shared by every
// estimator below.
struct DrawSummary {
    struct Slot {
        MurthyPsuEstimates murthy;
        double t_x_phase1 = 0.0;  // Σ_{s_1h} x
        double n1h = 0.0;
        double Nh = 0.0;
        double a = 0.0;           // N_h / n_1h
    };
    double N = 0.0;
    double M = 0.0;
    double m = 0.0;
    Variable aux = Variable::x;
    double aux_mean_square = 0.0;  // mean of x^2 over the phase-1 sample
    std::vector<Slot> slots;

    double expansion() const noexcept { return M / m; }  // 1 / π_h
};

inline DrawSummary summarize(const AtsdSample& draw, Variable aux = Variable::x) {
    if (draw.psus.empty()) throw std::invalid_argument("estimators: draw has no selected PSUs");
    DrawSummary s;
    s.N = draw.N;
    s.M = draw.M;
    s.m = draw.m();
    s.aux = aux;
    CompensatedSum sq;
    double n_aux = 0.0;
    for (const auto& p : draw.psus) {
        DrawSummary::Slot slot;
        slot.murthy = murthy_psu(p, aux);
        CompensatedSum t;
        for (const Unit& u : p.frame) {
            t.add(u.value(aux));
            sq.add(u.value(aux) * u.value(aux));
        }
        n_aux += p.frame_size();
        slot.t_x_phase1 = t.value();
        slot.n1h = p.frame_size();
        slot.Nh = p.psu_size;
        slot.a = p.expansion();
        s.slots.push_back(slot);
    }
    s.aux_mean_square = sq.value() / n_aux;
    return s;
}

namespace detail {

template <class F>
double expand(const DrawSummary& s, F&& per_slot_total) {
    CompensatedSum acc;
    for (const auto& slot : s.slots) acc.add(slot.a * per_slot_total(slot));
    return acc.value() * s.expansion() / s.N;
}

}  // namespace detail

inline double ybar_n2(const DrawSummary& s) {
    return detail::expand(s, [](const auto& slot) { return slot.murthy.t_hat_y; });
}
inline double xbar_n2(const DrawSummary& s) {
    return detail::expand(s, [](const auto& slot) { return slot.murthy.t_hat_x; });
}
inline double xbar_n1(const DrawSummary& s) {
    return detail::expand(s, [](const auto& slot) { return slot.t_x_phase1; });
}

inline double ybar_n2(const AtsdSample& draw) { return ybar_n2(summarize(draw)); }
inline double xbar_n2(const AtsdSample& draw, Variable aux = Variable::x) { return xbar_n2(summarize(draw, aux)); }
inline double xbar_n1(const AtsdSample& draw, Variable aux = Variable::x) { return xbar_n1(summarize(draw, aux)); }

// ---------------------------------------------------------------------------
// Variance estimation
// ---------------------------------------------------------------------------

enum class Moment { yy, xx, xy };

namespace detail {

inline double t_hat(const DrawSummary::Slot& s, bool want_x) {
    return want_x ? s.murthy.t_hat_x : s.murthy.t_hat_y;
}

inline std::optional<double> v3_of(const DrawSummary::Slot& s, Moment k) {
    switch (k) {
        case Moment::yy: return s.murthy.v3_hat_y;
        case Moment::xx: return s.murthy.v3_hat_x;
        case Moment::xy: return s.murthy.c3_hat_xy;
    }
    return std::nullopt;
}

inline double second_moment_total(const DrawSummary::Slot& s, Moment k) {
    switch (k) {
        case Moment::yy: return s.murthy.t_hat_y2;
        case Moment::xx: return s.murthy.t_hat_x2;
        case Moment::xy: return s.murthy.t_hat_xy;
    }
    return 0.0;
}

inline std::pair<bool, bool> operands(Moment k) {
    switch (k) {
        case Moment::yy: return {false, false};
        case Moment::xx: return {true, true};
        case Moment::xy: return {true, false};
    }
    return {false, false};
}

}  // namespace detail

// Within-PSU (co)variance estimator built from Murthy totals:
//   Ŝ_ab = [t̂_ab - t̂_a t̂_b / n_1h] / (n_1h - 1).
inline std::optional<double> s_hat_within(const DrawSummary::Slot& s, Moment k) {
    if (s.n1h < 2) return std::nullopt;
    const auto [first_x, second_x] = detail::operands(k);
    return (detail::second_moment_total(s, k) - detail::t_hat(s, first_x) * detail::t_hat(s, second_x) / s.n1h) /
           (s.n1h - 1.0);
}

// Between-PSU (co)variance of expanded totals a_h t̂_h over selected PSUs.
inline std::optional<double> s_hat_between(const DrawSummary& s, Moment k) {
    if (s.slots.size() < 2) return std::nullopt;
    const auto [first_x, second_x] = detail::operands(k);
    std::vector<double> a, b;
    for (const auto& slot : s.slots) {
        a.push_back(slot.a * detail::t_hat(slot, first_x));
        b.push_back(slot.a * detail::t_hat(slot, second_x));
    }
    return pair_moments(a, b).cov;
}

// Three-term estimator of var(ȳ_n2), var(x̄_n2) or cov(x̄_n2, ȳ_n2):
//   N^-2 [ M^2 (1 - m/M) Ŝ_between / m
//          + (M/m) Σ_s N_h^2 (1 - n_1h/N_h) Ŝ_within / n_1h
//          + (M/m) Σ_s a_h^2 n_1h (N_h - 1) / (N_h (n_1h - 1)) V̂3 ].
inline std::optional<double> three_term_estimate(const DrawSummary& s, Moment k) {
    double between_part = 0.0;
    if (s.m < s.M) {
        const auto sb = s_hat_between(s, k);
        if (!sb) return std::nullopt;
        between_part = s.M * s.M * (1.0 - s.m / s.M) * *sb / s.m;
    }
    CompensatedSum within, phase3;
    for (const auto& slot : s.slots) {
        const auto sw = s_hat_within(slot, k);
        const auto v3 = detail::v3_of(slot, k);
        if (!sw || !v3) return std::nullopt;
        within.add(slot.Nh * slot.Nh * (1.0 - slot.n1h / slot.Nh) * *sw / slot.n1h);
        const double factor = slot.n1h * (slot.Nh - 1.0) / (slot.Nh * (slot.n1h - 1.0));
        phase3.add(slot.a * slot.a * factor * *v3);
    }
    const double ratio = s.M / s.m;
    return (between_part + ratio * within.value() + ratio * phase3.value()) / (s.N * s.N);
}

inline std::optional<double> var_hat_xbar_n2(const DrawSummary& s) { return three_term_estimate(s, Moment::xx); }
inline std::optional<double> cov_hat_xy(const DrawSummary& s) { return three_term_estimate(s, Moment::xy); }
inline std::optional<double> var_hat_ybar_n2(const DrawSummary& s) { return three_term_estimate(s, Moment::yy); }

inline std::optional<double> var_hat_xbar_n2(const AtsdSample& d, Variable aux = Variable::x) {
    return var_hat_xbar_n2(summarize(d, aux));
}
inline std::optional<double> cov_hat_xy(const AtsdSample& d, Variable aux = Variable::x) {
    return cov_hat_xy(summarize(d, aux));
}

// Variance estimator of the regression estimator for coefficient beta:
// the three-term estimator of var(ȳ_n2) plus
//   N^-2 (M/m)^2 Σ_s a_h^2 (β^2 V̂3(t̂_x) - 2β Ĉ3(t̂_y, t̂_x)).
// Unbiased when beta is fixed.
inline std::optional<double> var_hat_mu_reg(const DrawSummary& s, double beta) {
    const auto base = var_hat_ybar_n2(s);
    if (!base) return std::nullopt;
    CompensatedSum extra;
    for (const auto& slot : s.slots) {
        const auto vx = slot.murthy.v3_hat_x;
        const auto cxy = slot.murthy.c3_hat_xy;
        if (!vx || !cxy) return std::nullopt;
        extra.add(slot.a * slot.a * (beta * beta * *vx - 2.0 * beta * *cxy));
    }
    const double ratio = s.M / s.m;
    return *base + ratio * ratio * extra.value() / (s.N * s.N);
}

inline std::optional<double> var_hat_mu_reg(const AtsdSample& d, double beta, Variable aux = Variable::x) {
    return var_hat_mu_reg(summarize(d, aux), beta);
}

// ---------------------------------------------------------------------------
// Regression coefficients and the regression estimator
// ---------------------------------------------------------------------------

struct RegressionCoefficient {
    enum class Kind { beta1_pop, beta_opt_pop, beta1_hat, beta_opt_hat, fixed };
    Kind kind = Kind::fixed;
    double value = 0.0;
    bool degenerate = false;
    double threshold = 0.0;  // zero-test bound used for the degeneracy decision

    static RegressionCoefficient fixed(double v) { return {Kind::fixed, v, false, 0.0}; }
};

inline std::string_view to_string(RegressionCoefficient::Kind k) {
    switch (k) {
        case RegressionCoefficient::Kind::beta1_pop: return "beta1";
        case RegressionCoefficient::Kind::beta_opt_pop: return "beta_opt";
        case RegressionCoefficient::Kind::beta1_hat: return "beta1_hat";
        case RegressionCoefficient::Kind::beta_opt_hat: return "beta_opt_hat";
        case RegressionCoefficient::Kind::fixed: return "fixed";
    }
    return "?";
}

// Relative zero-test scale for coefficient denominators.
inline constexpr double kDegeneracyTolerance = 1e-9;

// β̂1 = (t̂_xy - N ȳ_n2 x̄_n2) / (t̂_x² - N x̄_n2²), with population-level
// Murthy totals expanded like ȳ_n2. Degenerate when |denominator| is at or
// below 1e-9 N (phase-1 mean square of x).
inline RegressionCoefficient beta1_hat(const DrawSummary& s) {
    const double txy = detail::expand(s, [](const auto& slot) { return slot.murthy.t_hat_xy; }) * s.N;
    const double tx2 = detail::expand(s, [](const auto& slot) { return slot.murthy.t_hat_x2; }) * s.N;
    const double yb = ybar_n2(s);
    const double xb = xbar_n2(s);
    const double num = txy - s.N * yb * xb;
    const double den = tx2 - s.N * xb * xb;
    RegressionCoefficient c;
    c.kind = RegressionCoefficient::Kind::beta1_hat;
    c.threshold = kDegeneracyTolerance * s.N * s.aux_mean_square;
    c.degenerate = !(std::fabs(den) > c.threshold) || !std::isfinite(num);
    c.value = c.degenerate ? 0.0 : num / den;
    return c;
}

// β̂o = ĉov(ȳ_n2, x̄_n2) / v̂ar(x̄_n2); degenerate when either is undefined or
// v̂ar is at or below 1e-9 (phase-1 mean square of x).
inline RegressionCoefficient beta_opt_hat(const DrawSummary& s) {
    RegressionCoefficient c;
    c.kind = RegressionCoefficient::Kind::beta_opt_hat;
    c.threshold = kDegeneracyTolerance * s.aux_mean_square;
    const auto v = var_hat_xbar_n2(s);
    const auto cv = cov_hat_xy(s);
    c.degenerate = !v || !cv || !(*v > c.threshold) || !std::isfinite(*cv);
    c.value = c.degenerate ? 0.0 : *cv / *v;
    return c;
}

inline RegressionCoefficient beta1_hat(const AtsdSample& d, Variable aux = Variable::x) {
    return beta1_hat(summarize(d, aux));
}
inline RegressionCoefficient beta_opt_hat(const AtsdSample& d, Variable aux = Variable::x) {
    return beta_opt_hat(summarize(d, aux));
}

struct EstimatorReport {
    double estimate = 0.0;
    RegressionCoefficient coefficient;
    std::optional<double> var_hat;
    bool fallback_used = false;
    double ybar_n2 = 0.0;
    double xbar_n2 = 0.0;
    double xbar_n1 = 0.0;
};

// μ̂_reg = ȳ_n2 + β (x̄_n1 - x̄_n2); falls back to ȳ_n2 when the
// coefficient is degenerate.
inline EstimatorReport mu_reg(const DrawSummary& s, const RegressionCoefficient& beta) {
    EstimatorReport r;
    r.coefficient = beta;
    r.ybar_n2 = ybar_n2(s);
    r.xbar_n2 = xbar_n2(s);
    r.xbar_n1 = xbar_n1(s);
    if (beta.degenerate) {
        r.fallback_used = true;
        r.estimate = r.ybar_n2;
        r.var_hat = var_hat_mu_reg(s, 0.0);
    } else {
        r.estimate = r.ybar_n2 + beta.value * (r.xbar_n1 - r.xbar_n2);
        r.var_hat = var_hat_mu_reg(s, beta.value);
    }
    return r;
}

inline EstimatorReport mu_reg(const AtsdSample& d, const RegressionCoefficient& beta, Variable aux = Variable::x) {
    return mu_reg(summarize(d, aux), beta);
}

// Murthy-based mean with its variance estimator (the ATS estimator when the
// draw's phase 1 is a census).
inline EstimatorReport murthy_mean(const DrawSummary& s) {
    EstimatorReport r;
    r.ybar_n2 = r.estimate = ybar_n2(s);
    r.xbar_n2 = xbar_n2(s);
    r.xbar_n1 = xbar_n1(s);
    r.var_hat = var_hat_ybar_n2(s);
    return r;
}

// ---------------------------------------------------------------------------
// Conventional estimators
// ---------------------------------------------------------------------------

inline EstimatorReport srs_mean(const SrsSample& s) {
    std::vector<double> ys;
    for (const Unit& u : s.units) ys.push_back(u.y);
    EstimatorReport r;
    r.estimate = r.ybar_n2 = mean_of(ys);
    const double n = static_cast<double>(ys.size());
    if (ys.size() >= 2) r.var_hat = (1.0 - n / s.N) * sample_variance(ys) / n;
    return r;
}

// (1/N) Σ_s (M/m) N_h ȳ_h with the standard two-stage variance estimator.
inline EstimatorReport two_stage_mean(const TwoStageSample& s) {
    const double M = s.M, m = s.m(), N = s.N;
    std::vector<double> expanded;
    CompensatedSum within;
    bool defined = m >= 2 || m == M;
    for (const auto& slot : s.slots) {
        std::vector<double> ys;
        for (const Unit& u : slot.units) ys.push_back(u.y);
        const double Nh = slot.psu_size, nh = static_cast<double>(ys.size());
        expanded.push_back(Nh * mean_of(ys));
        if (ys.size() >= 2)
            within.add(Nh * Nh * (1.0 - nh / Nh) * sample_variance(ys) / nh);
        else if (nh < Nh)
            defined = false;
    }
    EstimatorReport r;
    r.estimate = r.ybar_n2 = compensated_sum(expanded) * (M / m) / N;
    if (defined) {
        const double between = m < M ? M * M * (1.0 - m / M) * sample_variance(expanded) / m : 0.0;
        r.var_hat = (between + (M / m) * within.value()) / (N * N);
    }
    return r;
}

// Regression estimator for two-stage double sampling: per selected PSU
// ȳ_2 + b (x̄_1 - x̄_2) with the least-squares slope b of the phase-2 sample,
// expanded by N_h, M/m and 1/N. A PSU whose phase-2 x is constant uses b = 0
// and marks the report as a fallback.
inline EstimatorReport regs_estimate(const TwoPhaseSample& s, Variable aux = Variable::x) {
    const double M = s.M, m = s.m(), N = s.N;
    EstimatorReport r;
    CompensatedSum acc, plain, x2acc, x1acc;
    for (const auto& slot : s.slots) {
        std::vector<double> x1, x2, y2;
        for (const Unit& u : slot.phase1) x1.push_back(u.value(aux));
        for (std::size_t i : slot.phase2) {
            x2.push_back(slot.phase1[i].value(aux));
            y2.push_back(slot.phase1[i].y);
        }
        const PairMoments xy = pair_moments(x2, y2);
        const double sxx = pair_moments(x2, x2).cov;
        const double x1_mean = mean_of(x1);
        double ms = 0.0;
        for (double v : x1) ms += v * v;
        ms /= static_cast<double>(x1.size());
        double b = 0.0;
        if (x2.size() >= 2 && sxx > kDegeneracyTolerance * ms)
            b = xy.cov / sxx;
        else
            r.fallback_used = true;
        const double Nh = slot.psu_size;
        acc.add(Nh * (xy.mean_b + b * (x1_mean - xy.mean_a)));
        plain.add(Nh * xy.mean_b);
        x2acc.add(Nh * xy.mean_a);
        x1acc.add(Nh * x1_mean);
    }
    r.estimate = acc.value() * (M / m) / N;
    r.ybar_n2 = plain.value() * (M / m) / N;
    r.xbar_n2 = x2acc.value() * (M / m) / N;
    r.xbar_n1 = x1acc.value() * (M / m) / N;
    return r;
}

}  // namespace atsd
