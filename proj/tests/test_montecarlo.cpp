#include <catch2/catch_amalgamated.hpp>

#include <atsd/cost_model.hpp>
#include <atsd/montecarlo.hpp>

#include <algorithm>
#include <random>

using namespace atsd;
using Catch::Matchers::WithinAbs;

namespace {

Population small_pop() {
    PopulationSpec s;
    s.grid_side = 8;
    s.psus = 4;
    s.cluster_rate = 4.0;
    s.points_per_cluster = 10.0;
    s.dispersion = 0.9;
    s.x.keep = 0.8;
    s.x.extra_per_cluster = 3.0;
    s.x.background = 0.05;
    s.z.keep = 0.3;
    s.z.noise_clusters = 2.0;
    s.z.noise_points = 6.0;
    s.seed = 314;
    return generate_population(s);
}

ExperimentConfig small_config(const Population& pop, long R, int threads) {
    EffortRequest req;
    req.cost = CostSpec{1.0, 5.0};
    req.atsd = AtsdParams::equal(pop.psu_count(), 2, 8, 3, 2, Condition{Variable::x, false, 0.0});
    req.ats_d1 = 2;
    ExperimentConfig c;
    c.plan = make_effort_plan(pop, req);
    c.replicates = R;
    c.threads = threads;
    c.master_seed = 99;
    c.exact.monte_carlo_draws = 2000;
    return c;
}

void require_same(const ExperimentTable& a, const ExperimentTable& b) {
    REQUIRE(a.rows.size() == b.rows.size());
    CHECK(a.replicates == b.replicates);
    CHECK(a.errored == b.errored);
    CHECK(a.reference_mse == b.reference_mse);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const EstimatorRow& x = a.rows[i];
        const EstimatorRow& y = b.rows[i];
        CHECK(x.estimator == y.estimator);
        CHECK(x.replicates == y.replicates);
        CHECK(x.mean == y.mean);
        CHECK(x.mean_se == y.mean_se);
        CHECK(x.mse == y.mse);
        CHECK(x.mse_se == y.mse_se);
        CHECK(x.eff == y.eff);
        CHECK(x.rbias == y.rbias);
        CHECK(x.fallback_rate == y.fallback_rate);
        CHECK(x.mean_cost == y.mean_cost);
        CHECK(x.mean_var_hat == y.mean_var_hat);
    }
}

ReplicateRecord fake(long r, EstimatorId e, double estimate) {
    ReplicateRecord rec;
    rec.replicate = r;
    rec.estimator = e;
    rec.estimate = estimate;
    rec.cost = 1.0;
    return rec;
}

}  // namespace

TEST_CASE("Experiment tables do not depend on the worker count", "[montecarlo]") {
    const Population pop = small_pop();
    const ExperimentResult one = run_experiment(pop, small_config(pop, 400, 1));
    const ExperimentResult eight = run_experiment(pop, small_config(pop, 400, 8));
    require_same(one.table, eight.table);
    CHECK(one.table.rows.size() == default_estimators().size());
}

TEST_CASE("Aggregation is order independent and additive", "[montecarlo]") {
    const Population pop = small_pop();
    ExperimentConfig cfg = small_config(pop, 300, 1);
    cfg.keep_replicates = true;
    const ExperimentResult full = run_experiment(pop, cfg);
    const double Y = pop.mean(Variable::y);

    SECTION("permuted records give an identical table") {
        std::vector<ReplicateRecord> shuffled = full.records;
        std::mt19937_64 g(5);
        std::shuffle(shuffled.begin(), shuffled.end(), g);
        require_same(aggregate(shuffled, cfg.estimators, Y, cfg.aux), full.table);
    }
    SECTION("two half runs merged equal one full run") {
        std::vector<ReplicateRecord> second, first;
        for (long r = 150; r < 300; ++r)
            for (auto& rec : run_replicate(pop, cfg, full.oracle, r)) second.push_back(rec);
        for (long r = 0; r < 150; ++r)
            for (auto& rec : run_replicate(pop, cfg, full.oracle, r)) first.push_back(rec);
        second.insert(second.end(), first.begin(), first.end());
        require_same(aggregate(second, cfg.estimators, Y, cfg.aux), full.table);
    }
}

TEST_CASE("Constant estimator stream has zero standard error", "[montecarlo]") {
    std::vector<ReplicateRecord> recs;
    for (long r = 0; r < 50; ++r) {
        recs.push_back(fake(r, EstimatorId::srs, 2.0));
        recs.push_back(fake(r, EstimatorId::reg_opt, 2.5));
    }
    const ExperimentTable t = aggregate(recs, {EstimatorId::reg_opt, EstimatorId::srs}, 2.0, Variable::x);
    const EstimatorRow* row = t.find(EstimatorId::reg_opt);
    REQUIRE(row);
    CHECK(row->mean == 2.5);
    CHECK(row->mean_se == 0.0);
    CHECK(row->mse == 0.25);
    CHECK(row->mse_se == 0.0);
    CHECK(row->rbias == 0.25);
    REQUIRE(row->eff);
    CHECK(*row->eff == 0.0);  // 0 / 0.25
    CHECK_FALSE(t.find(EstimatorId::srs)->eff);  // 0 / 0
    CHECK(t.replicates == 50);
    CHECK(t.quality_ok);
}

TEST_CASE("Errored replicates are counted and fail the run above 1%", "[montecarlo]") {
    std::vector<ReplicateRecord> recs;
    for (long r = 0; r < 200; ++r) {
        recs.push_back(fake(r, EstimatorId::srs, 1.0 + 0.01 * (r % 3)));
        ReplicateRecord bad = fake(r, EstimatorId::regs, 1.0);
        bad.error = r < 2;
        recs.push_back(bad);
    }
    const std::vector<EstimatorId> order = {EstimatorId::regs, EstimatorId::srs};
    const ExperimentTable ok = aggregate(recs, order, 1.0, Variable::x);
    CHECK(ok.errored == 2);
    CHECK(ok.quality_ok);
    CHECK(ok.find(EstimatorId::regs)->errors == 2);
    recs[5].error = true;  // replicate 2 now errors as well
    const ExperimentTable bad = aggregate(recs, order, 1.0, Variable::x);
    CHECK(bad.errored == 3);
    CHECK_FALSE(bad.quality_ok);
}

TEST_CASE("R = 1 smoke run", "[montecarlo]") {
    const Population pop = small_pop();
    const ExperimentResult res = run_experiment(pop, small_config(pop, 1, 1));
    CHECK(res.table.replicates == 1);
    CHECK(res.table.errored == 0);
    CHECK(res.table.rows.size() == default_estimators().size());
    for (const auto& row : res.table.rows) CHECK(row.replicates == 1);
}

TEST_CASE("Reference estimator has efficiency exactly 1", "[montecarlo]") {
    const Population pop = small_pop();
    const ExperimentResult res = run_experiment(pop, small_config(pop, 200, 1));
    const EstimatorRow* srs = res.table.find(EstimatorId::srs);
    REQUIRE(srs);
    REQUIRE(srs->eff);
    CHECK(*srs->eff == 1.0);
    CHECK(srs->eff_se == 0.0);
    REQUIRE(res.table.reference_closed_form);
    CHECK(*res.table.reference_closed_form > 0.0);
}

TEST_CASE("Census plan has zero error everywhere", "[montecarlo]") {
    const Population pop = make_population({{0, 2, 0, 1}, {3, 0, 0, 4}}, {{1, 1, 0, 1}, {2, 0, 1, 3}});
    EffortRequest req;
    req.cost = CostSpec{0.01, 1.0};
    req.atsd = AtsdParams::equal(2, 2, 4, 4, 0, Condition{Variable::x, false, 0.0});
    req.ats_d1 = 0;
    ExperimentConfig cfg;
    cfg.plan = make_effort_plan(pop, req);
    REQUIRE(cfg.plan.srs.n == 8);
    cfg.replicates = 20;
    const ExperimentResult res = run_experiment(pop, cfg);
    for (const auto& row : res.table.rows) {
        INFO(row.label);
        CHECK_THAT(row.mse, WithinAbs(0.0, 1e-24));
        CHECK_THAT(row.rbias, WithinAbs(0.0, 1e-12));
        CHECK_FALSE(row.eff);
    }
    // x has positive variance: the sample S²_x is positive, so β̂1 never
    // falls back. v̂ar(x̄_n2) of a census is 0, so β̂o always does.
    CHECK(res.table.find(EstimatorId::reg_b1)->fallback_rate == 0.0);
    CHECK(res.table.find(EstimatorId::reg_opt)->fallback_rate == 1.0);
}

TEST_CASE("Constant auxiliary forces the fallback to ybar_n2", "[montecarlo]") {
    const Population pop = make_population({{0, 2, 0, 1, 0, 0}, {3, 0, 0, 4, 1, 0}, {0, 0, 5, 0, 0, 1}},
                                           {{2, 2, 2, 2, 2, 2}, {2, 2, 2, 2, 2, 2}, {2, 2, 2, 2, 2, 2}});
    EffortRequest req;
    req.cost = CostSpec{1.0, 2.0};
    req.atsd = AtsdParams::equal(3, 2, 4, 2, 1, Condition{Variable::x, true, 0.0});
    req.ats_d1 = 1;
    ExperimentConfig cfg;
    cfg.plan = make_effort_plan(pop, req);
    cfg.replicates = 300;
    cfg.keep_replicates = true;
    const ExperimentResult res = run_experiment(pop, cfg);
    for (EstimatorId e : {EstimatorId::reg_o, EstimatorId::reg_1, EstimatorId::reg_opt, EstimatorId::reg_b1})
        CHECK(res.table.find(e)->fallback_rate == 1.0);
    for (const auto& rec : res.records) {
        if (rec.estimator != EstimatorId::reg_opt && rec.estimator != EstimatorId::reg_b1) continue;
        DrawRng rng = DrawRng(cfg.master_seed, static_cast<std::uint64_t>(rec.replicate)).substream(0);
        const double ybar = ybar_n2(run_atsd(pop, cfg.plan.atsd, rng));
        CHECK(rec.fallback);
        CHECK(rec.estimate == ybar);
    }
}

TEST_CASE("Experiment configuration is validated", "[montecarlo]") {
    const Population pop = small_pop();
    ExperimentConfig cfg = small_config(pop, 10, 1);
    cfg.replicates = 0;
    CHECK_THROWS_AS(run_experiment(pop, cfg), std::invalid_argument);
    cfg = small_config(pop, 10, 0);
    CHECK_THROWS_AS(run_experiment(pop, cfg), std::invalid_argument);
    cfg = small_config(pop, 10, 1);
    cfg.estimators.clear();
    CHECK_THROWS_AS(run_experiment(pop, cfg), std::invalid_argument);
}
