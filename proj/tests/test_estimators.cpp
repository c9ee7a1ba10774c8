#include <catch2/catch_amalgamated.hpp>

#include <atsd/enumeration.hpp>
#include <atsd/estimators.hpp>
#include <atsd/exact.hpp>
#include <atsd/fixtures.hpp>

#include <cmath>

using namespace atsd;

namespace {

// Exact first and second moments of the ATSD estimators of one fixture.
struct FixtureMoments {
    double prob = 0.0;
    double ybar = 0.0, xbar2 = 0.0, xbar1 = 0.0, mu = 0.0, mu2 = 0.0;
    double xb2sq = 0.0, yx = 0.0, ybsq = 0.0;
    double var_hat_mu = 0.0, var_hat_x = 0.0, cov_hat = 0.0, var_hat_y = 0.0;
    std::vector<double> s2x_given_h, s2y_given_h, sxy_given_h;  // E[Ŝ | h selected]
    double s2_ty = 0.0;
};

FixtureMoments fixture_moments(const Fixture& f) {
    FixtureMoments e;
    const int M = f.pop.psu_count();
    e.s2x_given_h.assign(static_cast<std::size_t>(M), 0.0);
    e.s2y_given_h.assign(static_cast<std::size_t>(M), 0.0);
    e.sxy_given_h.assign(static_cast<std::size_t>(M), 0.0);
    const double p_in = static_cast<double>(f.params.m) / M;
    enumerate_atsd(f.pop, f.params, [&](const AtsdSample& d, double p) {
        const DrawSummary s = summarize(d);
        const EstimatorReport r = mu_reg(s, RegressionCoefficient::fixed(f.beta));
        e.prob += p;
        e.ybar += p * ybar_n2(s);
        e.xbar2 += p * xbar_n2(s);
        e.xbar1 += p * xbar_n1(s);
        e.mu += p * r.estimate;
        e.mu2 += p * r.estimate * r.estimate;
        e.ybsq += p * ybar_n2(s) * ybar_n2(s);
        e.xb2sq += p * xbar_n2(s) * xbar_n2(s);
        e.yx += p * ybar_n2(s) * xbar_n2(s);
        if (f.params.m >= 2) {
            e.var_hat_mu += p * r.var_hat.value();
            e.var_hat_x += p * var_hat_xbar_n2(s).value();
            e.cov_hat += p * cov_hat_xy(s).value();
            e.var_hat_y += p * var_hat_ybar_n2(s).value();
        } else {
            CHECK_FALSE(r.var_hat.has_value());
        }
        for (std::size_t k = 0; k < d.psus.size(); ++k) {
            const auto h = static_cast<std::size_t>(d.psus[k].psu);
            e.s2x_given_h[h] += p / p_in * s_hat_within(s.slots[k], Moment::xx).value();
            e.s2y_given_h[h] += p / p_in * s_hat_within(s.slots[k], Moment::yy).value();
            e.sxy_given_h[h] += p / p_in * s_hat_within(s.slots[k], Moment::xy).value();
        }
        if (d.m() >= 2) e.s2_ty += p * s_hat_between(s, Moment::yy).value();
    });
    return e;
}

std::vector<double> within_variance(const Population& pop, int h, Variable a, Variable b) {
    std::vector<double> va, vb;
    for (const Unit& u : pop.psu(h)) {
        va.push_back(u.value(a));
        vb.push_back(u.value(b));
    }
    return {pair_moments(va, vb).cov};
}

}  // namespace

TEST_CASE("Point estimators are exactly design-unbiased on tiny fixtures", "[estimators][exact]") {
    for (const Fixture& f : tiny_fixtures()) {
        CAPTURE(f.name);
        const FixtureMoments e = fixture_moments(f);
        CHECK(std::fabs(e.prob - 1.0) < 1e-12);
        CHECK(std::fabs(e.ybar - f.pop.mean(Variable::y)) < 1e-10);
        CHECK(std::fabs(e.xbar2 - f.pop.mean(Variable::x)) < 1e-10);
        CHECK(std::fabs(e.xbar1 - f.pop.mean(Variable::x)) < 1e-10);
        CHECK(std::fabs(e.mu - f.pop.mean(Variable::y)) < 1e-10);
    }
}

TEST_CASE("Exact variance decomposition matches the enumeration variance", "[estimators][exact]") {
    for (const Fixture& f : tiny_fixtures()) {
        CAPTURE(f.name);
        const FixtureMoments e = fixture_moments(f);
        const PhaseThreeMoments m3 = phase_three_moments(f.pop, f.params);
        REQUIRE(m3.exact);
        const DesignVariance dv = var_mu_reg_exact(f.pop, f.params, f.beta, m3);
        const double enum_var = e.mu2 - e.mu * e.mu;
        CHECK(std::fabs(dv.total() - enum_var) < 1e-10);
        if (f.params.m >= 2) CHECK(std::fabs(e.var_hat_mu - enum_var) < 1e-10);
        // var(x̄_n2), cov(ȳ_n2, x̄_n2) and var(ȳ_n2)
        const double vx = e.xb2sq - e.xbar2 * e.xbar2;
        const double cxy = e.yx - e.ybar * e.xbar2;
        const double vy = e.ybsq - e.ybar * e.ybar;
        CHECK(std::fabs(var_xbar_n2_exact(f.pop, f.params, m3).total() - vx) < 1e-10);
        CHECK(std::fabs(cov_xy_n2_exact(f.pop, f.params, m3).total() - cxy) < 1e-10);
        CHECK(std::fabs(var_mu_reg_exact(f.pop, f.params, 0.0, m3).total() - vy) < 1e-10);
        if (f.params.m >= 2) {
            CHECK(std::fabs(e.var_hat_x - vx) < 1e-10);
            CHECK(std::fabs(e.cov_hat - cxy) < 1e-10);
            CHECK(std::fabs(e.var_hat_y - vy) < 1e-10);
        }
        const BetaOptimal bo = beta_opt_pop(f.pop, f.params, m3);
        CHECK(std::fabs(bo.value - cxy / vx) < 1e-9);
    }
}

TEST_CASE("Within-PSU moment identities hold exactly", "[estimators][exact]") {
    for (const Fixture& f : tiny_fixtures()) {
        CAPTURE(f.name);
        const FixtureMoments e = fixture_moments(f);
        const PhaseThreeMoments m3 = phase_three_moments(f.pop, f.params);
        for (int h = 0; h < f.pop.psu_count(); ++h) {
            CAPTURE(h);
            const double n1 = f.params.n1h[static_cast<std::size_t>(h)];
            const auto k = static_cast<std::size_t>(h);
            const double s2x = within_variance(f.pop, h, Variable::x, Variable::x)[0];
            const double s2y = within_variance(f.pop, h, Variable::y, Variable::y)[0];
            const double sxy = within_variance(f.pop, h, Variable::x, Variable::y)[0];
            CHECK(std::fabs(e.s2x_given_h[k] - (s2x - m3.v3x[k] / (n1 * (n1 - 1.0)))) < 1e-10);
            CHECK(std::fabs(e.s2y_given_h[k] - (s2y - m3.v3y[k] / (n1 * (n1 - 1.0)))) < 1e-10);
            CHECK(std::fabs(e.sxy_given_h[k] - (sxy - m3.c3[k] / (n1 * (n1 - 1.0)))) < 1e-10);
        }
        if (f.params.m >= 2) {
            // E(Ŝ²_ty) = S²_ty + (1/M) Σ_h [N_h² (1 - f_h) S²_yh / n_1h + a_h² E2 V3(t̂_y)]
            const double M = f.pop.psu_count();
            std::vector<double> totals;
            double extra = 0.0;
            for (int h = 0; h < f.pop.psu_count(); ++h) {
                totals.push_back(f.pop.psu_total(h, Variable::y));
                const double Nh = f.pop.psu_size(h), n1 = f.params.n1h[static_cast<std::size_t>(h)];
                const double s2y = within_variance(f.pop, h, Variable::y, Variable::y)[0];
                extra += Nh * Nh * (1.0 - n1 / Nh) * s2y / n1 + (Nh / n1) * (Nh / n1) * m3.v3y[static_cast<std::size_t>(h)];
            }
            CHECK(std::fabs(e.s2_ty - (sample_variance(totals) + extra / M)) < 1e-10);
        }
    }
}

TEST_CASE("Estimator identities on simple populations", "[estimators]") {
    DrawRng rng(11, 3);
    SECTION("census draw reproduces population means and β1") {
        const Population pop = make_population({{0, 1, 4, 0, 2}, {3, 0, 0, 1, 1}}, {{1, 1, 3, 0, 2}, {2, 1, 0, 0, 1}});
        const AtsdParams p = AtsdParams::equal(2, 2, 5, 5, 2, Condition{});
        const AtsdSample d = run_atsd(pop, p, rng);
        const DrawSummary s = summarize(d);
        CHECK(ybar_n2(s) == Catch::Approx(pop.mean(Variable::y)));
        CHECK(xbar_n2(s) == Catch::Approx(pop.mean(Variable::x)));
        CHECK(xbar_n1(s) == Catch::Approx(pop.mean(Variable::x)));
        CHECK(beta1_hat(s).value == Catch::Approx(beta_pop(pop)));
    }
    SECTION("y = 3x gives β1 = 3 and census β̂1 = 3") {
        const Population pop = make_population({{0, 3, 12, 0}, {3, 9, 0, 3}}, {{0, 1, 4, 0}, {1, 3, 0, 1}});
        CHECK(beta_pop(pop) == Catch::Approx(3.0));
        const AtsdSample d = run_atsd(pop, AtsdParams::equal(2, 2, 4, 4, 1, Condition{}), rng);
        CHECK(beta1_hat(d).value == Catch::Approx(3.0));
    }
    SECTION("orthogonal x gives β1 = 0") {
        const Population pop = make_population({{1, -0.0, 1, 0}}, {{0, 0, 1, 1}});
        CHECK(beta_pop(pop) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("constant x: β1 undefined, β̂ degenerate, fallback to ȳ_n2") {
        const Population pop = make_population({{0, 1, 4, 0, 2}, {3, 0, 0, 1, 0}}, {{2, 2, 2, 2, 2}, {2, 2, 2, 2, 2}});
        CHECK_THROWS_AS(beta_pop(pop), std::invalid_argument);
        for (int r = 0; r < 20; ++r) {
            const AtsdSample d = run_atsd(pop, AtsdParams::equal(2, 2, 4, 2, 1, Condition{}), rng);
            const auto b1 = beta1_hat(d);
            const auto bo = beta_opt_hat(d);
            CHECK(b1.degenerate);
            CHECK(bo.degenerate);
            CHECK(mu_reg(d, b1).estimate == ybar_n2(d));
            CHECK(mu_reg(d, bo).fallback_used);
            CHECK(var_hat_xbar_n2(d).value() == Catch::Approx(0.0).margin(1e-12));
        }
    }
    SECTION("x identically zero is degenerate") {
        const Population pop = make_population({{0, 1, 4, 0}, {3, 0, 0, 1}}, {{0, 0, 0, 0}, {0, 0, 0, 0}});
        const AtsdSample d = run_atsd(pop, AtsdParams::equal(2, 2, 3, 2, 1, Condition{}), rng);
        CHECK(beta1_hat(d).degenerate);
        CHECK(beta_opt_hat(d).degenerate);
    }
    SECTION("y = x gives β̂o = 1 and ĉov = v̂ar") {
        const Population pop = make_population({{0, 1, 4, 0, 2, 5}, {3, 0, 0, 1, 7, 1}}, {{0, 1, 4, 0, 2, 5}, {3, 0, 0, 1, 7, 1}});
        for (int r = 0; r < 20; ++r) {
            const AtsdSample d = run_atsd(pop, AtsdParams::equal(2, 2, 5, 3, 1, Condition{}), rng);
            const auto bo = beta_opt_hat(d);
            if (bo.degenerate) continue;
            CHECK(bo.value == Catch::Approx(1.0));
        }
    }
    SECTION("β = 0 reduces μ̂_reg to ȳ_n2 and v̂ar to v̂ar(ȳ_n2)") {
        const Population pop = make_population({{0, 1, 4, 0, 2}, {3, 0, 0, 1, 0}}, {{1, 1, 3, 0, 2}, {2, 0, 1, 1, 0}});
        const AtsdSample d = run_atsd(pop, AtsdParams::equal(2, 2, 4, 2, 1, Condition{}), rng);
        const DrawSummary s = summarize(d);
        const auto r = mu_reg(s, RegressionCoefficient::fixed(0.0));
        CHECK(r.estimate == ybar_n2(s));
        CHECK(r.var_hat.value() == var_hat_ybar_n2(s).value());
    }
    SECTION("y = 2x, β = 2 gives μ̂_reg = 2 x̄_n1") {
        const Population pop = make_population({{0, 2, 8, 0, 4}, {6, 0, 0, 2, 0}}, {{0, 1, 4, 0, 2}, {3, 0, 0, 1, 0}});
        for (int r = 0; r < 20; ++r) {
            const AtsdSample d = run_atsd(pop, AtsdParams::equal(2, 1, 4, 2, 1, Condition{}), rng);
            CHECK(mu_reg(d, RegressionCoefficient::fixed(2.0)).estimate == Catch::Approx(2.0 * xbar_n1(d)));
        }
    }
    SECTION("constant population gives zero variance estimates") {
        const Population pop = make_population({{1.5, 1.5, 1.5, 1.5}, {1.5, 1.5, 1.5, 1.5}}, {{1, 0, 1, 0}, {0, 1, 1, 0}});
        const AtsdSample d = run_atsd(pop, AtsdParams::equal(2, 2, 3, 2, 1, Condition{}), rng);
        CHECK(ybar_n2(d) == Catch::Approx(1.5));
        CHECK(var_hat_mu_reg(d, 0.0).value() == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("insufficient sizes leave variance estimates undefined") {
        const Population pop = make_population({{0, 1, 4, 0}, {3, 0, 0, 1}}, {{1, 1, 3, 0}, {2, 0, 1, 1}});
        const AtsdSample one_psu = run_atsd(pop, AtsdParams::equal(2, 1, 3, 2, 1, Condition{}), rng);
        CHECK_FALSE(var_hat_mu_reg(one_psu, 0.5).has_value());
        CHECK(beta_opt_hat(one_psu).degenerate);
        const AtsdSample one_initial = run_atsd(pop, AtsdParams::equal(2, 2, 3, 1, 1, Condition{}), rng);
        CHECK_FALSE(var_hat_xbar_n2(one_initial).has_value());
    }
}

TEST_CASE("Exact variance special cases", "[estimators][exact]") {
    const Population pop = make_population({{0, 1, 4, 0, 2}, {3, 0, 0, 1, 0}}, {{1, 1, 3, 0, 2}, {2, 0, 1, 1, 0}});
    SECTION("census parameters give zero variance") {
        const auto dv = var_mu_reg_exact(pop, AtsdParams::equal(2, 2, 5, 5, 2, Condition{}), 0.4);
        CHECK(dv.part1 == 0.0);
        CHECK(dv.part2 == 0.0);
        CHECK(dv.part3 == Catch::Approx(0.0).margin(1e-14));
    }
    SECTION("d = 0 with phase-2 census of s_1h has no phase-3 part") {
        const auto dv = var_mu_reg_exact(pop, AtsdParams::equal(2, 1, 3, 3, 0, Condition{}), 0.4);
        CHECK(dv.part3 == Catch::Approx(0.0).margin(1e-14));
        CHECK(dv.part1 > 0.0);
    }
}

TEST_CASE("Conventional estimators", "[estimators]") {
    const Population pop = make_population({{0, 1, 4, 0, 2}, {3, 0, 0, 1}}, {{1, 1, 3, 0, 2}, {2, 0, 1, 1}});
    const double Y = pop.mean(Variable::y);
    SECTION("two-stage mean is unbiased and its variance estimator too") {
        double mean = 0.0, second = 0.0, vhat = 0.0;
        enumerate_two_stage(pop, 1, 3, [&](const TwoStageSample& d, double p) {
            const auto r = two_stage_mean(d);
            mean += p * r.estimate;
            // m = 1 < M: the between term is not estimable.
            CHECK_FALSE(r.var_hat.has_value());
        });
        CHECK(std::fabs(mean - Y) < 1e-12);
        mean = second = vhat = 0.0;
        enumerate_two_stage(pop, 2, 2, [&](const TwoStageSample& d, double p) {
            const auto r = two_stage_mean(d);
            mean += p * r.estimate;
            second += p * r.estimate * r.estimate;
            vhat += p * r.var_hat.value();
        });
        CHECK(std::fabs(mean - Y) < 1e-12);
        CHECK(std::fabs(vhat - (second - mean * mean)) < 1e-12);
    }
    SECTION("SRSWOR mean and variance estimator are unbiased") {
        double mean = 0.0, second = 0.0, vhat = 0.0, prob = 0.0;
        const double paths = enumerate_srswor(pop, 3, [&](const SrsSample& d, double p) {
            const auto r = srs_mean(d);
            prob += p;
            mean += p * r.estimate;
            second += p * r.estimate * r.estimate;
            vhat += p * r.var_hat.value();
        });
        CHECK(paths == 84.0);
        CHECK(std::fabs(prob - 1.0) < 1e-12);
        CHECK(std::fabs(mean - Y) < 1e-12);
        CHECK(std::fabs(vhat - (second - mean * mean)) < 1e-12);
    }
    SECTION("census gives the population mean for every conventional estimator") {
        DrawRng rng(5, 0);
        CHECK(srs_mean(run_srswor_design(pop, pop.size(), rng)).estimate == Catch::Approx(Y));
        const auto d = run_two_stage(pop, 2, std::vector<int>{4, 4}, rng);
        // A PSU of size 4 is censused; the size-5 PSU is not, so only the
        // equal-size census below is exact.
        (void)d;
        const Population eq = make_population({{0, 1, 4, 0}, {3, 0, 0, 1}}, {{1, 1, 3, 0}, {2, 0, 1, 1}});
        CHECK(two_stage_mean(run_two_stage(eq, 2, 4, rng)).estimate == Catch::Approx(eq.mean(Variable::y)));
    }
    SECTION("Regs with y = 2x expands 2 x̄_1") {
        const Population lin = make_population({{0, 2, 8, 0, 4}, {6, 0, 0, 2, 2}}, {{0, 1, 4, 0, 2}, {3, 0, 0, 1, 1}});
        DrawRng rng(9, 1);
        for (int r = 0; r < 20; ++r) {
            const auto d = run_two_stage_double(lin, 1, 4, 3, rng);
            const auto rep = regs_estimate(d);
            if (rep.fallback_used) continue;
            CHECK(rep.estimate == Catch::Approx(2.0 * rep.xbar_n1));
        }
    }
    SECTION("Regs census collapses to the population mean") {
        DrawRng rng(9, 2);
        const Population eq = make_population({{0, 2, 8, 0, 4}, {6, 0, 0, 2, 2}}, {{0, 1, 4, 0, 2}, {3, 0, 0, 1, 1}});
        const auto d = run_two_stage_double(eq, 2, 5, 5, rng);
        CHECK(regs_estimate(d).estimate == Catch::Approx(eq.mean(Variable::y)));
    }
}
