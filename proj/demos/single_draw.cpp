// Walks one ATSD draw on the population1 preset: the phase-1 frame of each
// selected PSU, the sequential phase-2 sample, the per-PSU Murthy totals and
// the four regression estimates of the population mean of y.

#include <atsd/atsd.hpp>

#include <cstdio>
#include <filesystem>

using namespace atsd;

int main(int argc, char** argv) {
    const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 0) : 7;
    const RunConfig rc = load_config(std::filesystem::path(ATSD_PRESET_DIR) / "table2.cfg");
    const Population pop = generate_population(rc.population);
    const ScenarioConfig& sc = rc.scenarios.front();
    const EffortPlan plan = scenario_plan(pop, sc);
    const PopulationStats stats = compute_stats(pop);

    std::printf("population: N=%d M=%d mean(y)=%.4f corr(x,y)=%.4f\n", pop.size(), pop.psu_count(),
                stats.mean_of(Variable::y), stats.corr_xy.value_or(0.0));
    std::printf("scenario %s: m=%d n1h=%d n2h1=%d d=%d condition %s, E(n_y)=%.2f, expected cost %.1f\n",
                sc.name.c_str(), plan.atsd.m, sc.n1h, plan.atsd.n2h1, plan.atsd.d, plan.atsd.condition.name().c_str(),
                plan.expected_ny, plan.budget);

    DrawRng rng(seed, 0);
    const AtsdSample draw = run_atsd(pop, plan.atsd, rng);
    const DrawSummary s = summarize(draw, sc.aux);
    for (const auto& psu : draw.psus) {
        std::printf("  PSU %d: frame %d, initial %d (%d satisfy), added %zu, t_y=%.2f (true %.0f), t_x=%.2f (true %.0f)\n",
                    psu.psu + 1, psu.frame_size(), psu.n_initial(), psu.l_initial, psu.added.size(),
                    murthy_total(psu, Variable::y) * psu.expansion(), pop.psu_total(psu.psu, Variable::y),
                    murthy_total(psu, Variable::x) * psu.expansion(), pop.psu_total(psu.psu, Variable::x));
    }
    std::printf("n_aux=%d n_y=%d cost=%.1f\n", draw.n_aux(), draw.n_y(),
                plan.cost.c_aux * draw.n_aux() + plan.cost.c_tar * draw.n_y());

    const OracleCoefficients oracle = oracle_coefficients(pop, plan.atsd, sc.aux, ExactOptions{});
    const std::pair<const char*, RegressionCoefficient> coefs[] = {
        {"RegO  (beta_o)", oracle.beta_o},
        {"Reg1  (beta_1)", oracle.beta1},
        {"Regopt(beta_o hat)", beta_opt_hat(s)},
        {"Regb1 (beta_1 hat)", beta1_hat(s)},
    };
    std::printf("true mean %.4f, ybar_n2 %.4f, xbar_n1 %.4f, xbar_n2 %.4f\n", stats.mean_of(Variable::y), ybar_n2(s),
                xbar_n1(s), xbar_n2(s));
    for (const auto& [name, beta] : coefs) {
        const EstimatorReport r = mu_reg(s, beta);
        std::printf("  %-19s beta=%8.4f estimate=%.4f%s\n", name, beta.value, r.estimate,
                    r.fallback_used ? " (fallback)" : "");
    }
    return 0;
}
