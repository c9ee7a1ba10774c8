#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cost_model.hpp"
#include "enumeration.hpp"
#include "estimators.hpp"
#include "exact.hpp"
#include "fixtures.hpp"
#include "murthy.hpp"

namespace atsd {

// Enumeration-oracle checks on the built-in tiny fixtures. Every check
// compares an exact expectation with its closed form.
struct VerifyReport {
    std::string suite;
    std::vector<std::string> lines;
    int passed = 0;
    int failed = 0;

    bool ok() const noexcept { return failed == 0 && passed > 0; }

    void check(const std::string& what, double got, double want, double tol = 1e-10) {
        const double diff = std::fabs(got - want);
        const bool pass = diff <= tol * std::max(1.0, std::fabs(want));
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-4s %-44s got %.15g want %.15g diff %.3g", pass ? "PASS" : "FAIL",
                      what.c_str(), got, want, diff);
        lines.emplace_back(buf);
        (pass ? passed : failed) += 1;
    }
    void note(const std::string& text) { lines.push_back("     " + text); }
};

inline const std::vector<std::string>& verify_suites() {
    static const std::vector<std::string> names = {"unbiasedness", "variance", "cost", "murthy"};
    return names;
}

namespace detail {

inline std::string tag(const Fixture& f, const std::string& what) { return f.name + " " + what; }

}  // namespace detail

inline VerifyReport verify_murthy() {
    VerifyReport r{"murthy", {}, 0, 0};
    for (const Fixture& f : tiny_fixtures()) {
        for (int h = 0; h < f.pop.psu_count(); ++h) {
            const auto& frame = f.pop.psu(h);
            const auto paths = enumerate_sequential(frame, f.params.n2h1, f.params.d, f.params.condition);
            Distribution ty, tx;
            double v3y = 0.0, c3 = 0.0, prob = 0.0;
            for (const auto& [s, p] : paths) {
                prob += p;
                ty.add(murthy_total(s, Variable::y), p);
                tx.add(murthy_total(s, Variable::x), p);
            }
            double cov = 0.0;
            for (std::size_t i = 0; i < paths.size(); ++i)
                cov += ty.prob[i] * (ty.value[i] - ty.mean()) * (tx.value[i] - tx.mean());
            double total_y = 0.0, total_x = 0.0;
            for (const Unit& u : frame) {
                total_y += u.y;
                total_x += u.x;
            }
            const std::string psu = "psu" + std::to_string(h + 1);
            r.check(detail::tag(f, psu + " sum of path probabilities"), prob, 1.0, 1e-12);
            r.check(detail::tag(f, psu + " E(t_hat_y) vs frame total"), ty.mean(), total_y);
            r.check(detail::tag(f, psu + " E(t_hat_x) vs frame total"), tx.mean(), total_x);
            if (f.params.n2h1 >= 2) {
                for (const auto& [s, p] : paths) {
                    v3y += p * v3_hat(s, Variable::y).value();
                    c3 += p * c3_hat(s).value();
                }
                r.check(detail::tag(f, psu + " E(V3_hat_y) vs var(t_hat_y)"), v3y, ty.variance());
                r.check(detail::tag(f, psu + " E(C3_hat) vs cov(t_hat_y, t_hat_x)"), c3, cov);
                r.check(detail::tag(f, psu + " analytic C3 vs enumeration"),
                        conditional_c3(frame, f.params.n2h1, f.params.d, f.params.condition, value_of(Variable::y),
                                       value_of(Variable::x)),
                        cov);
            }
        }
    }
    return r;
}

inline VerifyReport verify_unbiasedness() {
    VerifyReport r{"unbiasedness", {}, 0, 0};
    for (const Fixture& f : tiny_fixtures()) {
        double prob = 0.0, yb = 0.0, xb2 = 0.0, xb1 = 0.0, mu = 0.0;
        enumerate_atsd(f.pop, f.params, [&](const AtsdSample& d, double p) {
            const DrawSummary s = summarize(d);
            prob += p;
            yb += p * ybar_n2(s);
            xb2 += p * xbar_n2(s);
            xb1 += p * xbar_n1(s);
            mu += p * mu_reg(s, RegressionCoefficient::fixed(f.beta)).estimate;
        });
        const double Y = f.pop.mean(Variable::y), X = f.pop.mean(Variable::x);
        r.check(detail::tag(f, "sum of path probabilities"), prob, 1.0, 1e-12);
        r.check(detail::tag(f, "E(ybar_n2) vs Y"), yb, Y);
        r.check(detail::tag(f, "E(xbar_n2) vs X"), xb2, X);
        r.check(detail::tag(f, "E(xbar_n1) vs X"), xb1, X);
        r.check(detail::tag(f, "E(mu_reg | beta fixed) vs Y"), mu, Y);
    }
    return r;
}

inline VerifyReport verify_variance() {
    VerifyReport r{"variance", {}, 0, 0};
    for (const Fixture& f : tiny_fixtures()) {
        const int M = f.pop.psu_count();
        const double p_in = static_cast<double>(f.params.m) / M;
        double mu = 0.0, mu2 = 0.0, vhat = 0.0, s2ty = 0.0;
        std::vector<double> s2x(static_cast<std::size_t>(M), 0.0);
        enumerate_atsd(f.pop, f.params, [&](const AtsdSample& d, double p) {
            const DrawSummary s = summarize(d);
            const EstimatorReport rep = mu_reg(s, RegressionCoefficient::fixed(f.beta));
            mu += p * rep.estimate;
            mu2 += p * rep.estimate * rep.estimate;
            if (rep.var_hat) vhat += p * *rep.var_hat;
            for (std::size_t k = 0; k < d.psus.size(); ++k)
                s2x[static_cast<std::size_t>(d.psus[k].psu)] +=
                    p / p_in * s_hat_within(s.slots[k], Moment::xx).value();
            if (d.m() >= 2) s2ty += p * s_hat_between(s, Moment::yy).value();
        });
        const double var = mu2 - mu * mu;
        const PhaseThreeMoments m3 = phase_three_moments(f.pop, f.params);
        r.check(detail::tag(f, "var_mu_reg_exact vs enumeration"),
                var_mu_reg_exact(f.pop, f.params, f.beta, m3).total(), var);
        if (f.params.m >= 2) r.check(detail::tag(f, "E(var_hat(mu_reg)) vs var"), vhat, var);
        else r.note(f.name + " m = 1: var_hat undefined, unbiasedness of var_hat not applicable");

        std::vector<double> totals;
        double extra = 0.0;
        for (int h = 0; h < M; ++h) {
            const auto k = static_cast<std::size_t>(h);
            std::vector<double> xs, ys;
            for (const Unit& u : f.pop.psu(h)) {
                xs.push_back(u.x);
                ys.push_back(u.y);
            }
            const double n1 = f.params.n1h[k], Nh = f.pop.psu_size(h);
            r.check(detail::tag(f, "psu" + std::to_string(h + 1) + " E(S2_x_hat | h) identity"), s2x[k],
                    sample_variance(xs) - m3.v3x[k] / (n1 * (n1 - 1.0)));
            totals.push_back(f.pop.psu_total(h, Variable::y));
            extra += Nh * Nh * (1.0 - n1 / Nh) * sample_variance(ys) / n1 + (Nh / n1) * (Nh / n1) * m3.v3y[k];
        }
        if (f.params.m >= 2) r.check(detail::tag(f, "E(S2_ty_hat) identity"), s2ty, sample_variance(totals) + extra / M);
    }
    return r;
}

inline VerifyReport verify_cost() {
    VerifyReport r{"cost", {}, 0, 0};
    for (const Fixture& f : tiny_fixtures()) {
        const AtsdParams& a = f.params;
        int min_frame = a.n1h[0];
        for (int v : a.n1h) min_frame = std::min(min_frame, v);
        if (a.d * a.n2h1 > min_frame - a.n2h1) {
            r.note(f.name + " expansion can be capped by the frame; E(n_y) formula not exact, skipped");
            continue;
        }
        double ny = 0.0;
        enumerate_atsd(f.pop, a, [&](const AtsdSample& d, double p) { ny += p * d.n_y(); });
        r.check(detail::tag(f, "E(n_y) formula vs enumeration"),
                expected_ny(compute_stats(f.pop, a.condition), a.m, a.n2h1, a.d), ny);
    }
    // Matched expected costs on a uniform 20 x 20 population, 4 PSUs.
    std::vector<std::vector<double>> y(4, std::vector<double>(100, 0.0));
    for (int h = 0; h < 4; ++h)
        for (int j = 0; j < 100; j += 9 + h) y[static_cast<std::size_t>(h)][static_cast<std::size_t>(j)] = 1.0 + h;
    const Population pop = make_population(y, y);
    EffortRequest req;
    req.atsd = AtsdParams::equal(4, 4, 50, 10, 4, Condition{Variable::x, false, 0.0});
    req.ats_d1 = 10;
    const EffortPlan plan = make_effort_plan(pop, req);
    r.check("uniform pop: ATSD budget vs c_aux n_aux + c_tar E(n_y)", plan.budget,
            req.cost.c_aux * 200.0 + req.cost.c_tar * plan.expected_ny);
    const double gap = plan.max_gap() / req.cost.c_tar;
    r.check("uniform pop: max cost gap within one c_tar", gap <= 1.0 ? 1.0 : 0.0, 1.0);
    r.note("max cost gap / c_tar = " + std::to_string(gap));
    return r;
}

inline VerifyReport run_verify_suite(std::string_view name) {
    if (name == "unbiasedness") return verify_unbiasedness();
    if (name == "variance") return verify_variance();
    if (name == "cost") return verify_cost();
    if (name == "murthy") return verify_murthy();
    throw std::invalid_argument("unknown verify suite '" + std::string(name) + "'");
}

}  // namespace atsd
