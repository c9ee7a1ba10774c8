// atsd: command-line front end of the ATSD simulator.

#include <CLI11.hpp>

#include <atsd/commands.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Adaptive two-stage sequential double sampling simulator", "atsd"};
    app.set_version_flag("--version", ATSD_VERSION);
    app.require_subcommand(1);

    atsd::GenerateOptions gen;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    auto* g = app.add_subcommand("generate", "Generate a population and print its statistics");
    g->add_option("config", gen.config, "Configuration file")->required();
    auto* g_seed = g->add_option("--seed", gen_seed, "Population seed (overrides ATSD_SEED and the config)");
    g->add_option("--out", gen_out, "Population file to write");

    atsd::RunOptions run;
    std::uint64_t run_seed = 0;
    long run_reps = 0;
    int run_threads = 0;
    auto* r = app.add_subcommand("run", "Run the Monte Carlo experiment of every scenario");
    r->add_option("config", run.config, "Configuration file")->required();
    auto* r_reps = r->add_option("--replicates", run_reps, "Replicates per scenario");
    auto* r_threads = r->add_option("--threads", run_threads, "Worker threads");
    auto* r_seed = r->add_option("--seed", run_seed, "Master seed (overrides ATSD_SEED and the config)");
    r->add_option("--out-dir", run.out_dir, "Output directory")->capture_default_str();
    r->add_option("--scenario", run.scenarios, "Run only the named scenarios");
    r->add_flag("--keep-replicates", run.keep_replicates, "Also write per-replicate reports");
    r->add_flag("--quiet", run.quiet, "Do not print the tables");

    std::string suite = "all";
    auto* v = app.add_subcommand("verify", "Run the enumeration-oracle suites on tiny fixtures");
    v->add_option("--suite", suite, "Suite to run")
        ->check(CLI::IsMember({"all", "unbiasedness", "variance", "cost", "murthy"}))
        ->capture_default_str();

    atsd::CostPlanOptions cp;
    auto* c = app.add_subcommand("cost-plan", "Print the matched-effort plan of each scenario");
    c->add_option("config", cp.config, "Configuration file")->required();
    c->add_option("--scenario", cp.scenarios, "Only the named scenarios");

    atsd::CalibrateOptions cal;
    std::string cal_out;
    int cal_restarts = 0;
    std::uint64_t cal_seed = 0;
    auto* k = app.add_subcommand("calibrate", "Search generator parameters matching the [calibration] goals");
    k->add_option("config", cal.config, "Configuration file")->required();
    k->add_option("--out", cal_out, "Write the calibrated sections to this file");
    auto* k_restarts = k->add_option("--restarts", cal_restarts, "Random restarts (and refinement steps)");
    auto* k_seed = k->add_option("--seed", cal_seed, "Search seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return atsd::kExitConfig;
    }

    if (g->parsed()) {
        if (*g_seed) gen.seed = gen_seed;
        if (!gen_out.empty()) gen.out = gen_out;
        return atsd::cmd_generate(gen, std::cout, std::cerr);
    }
    if (r->parsed()) {
        if (*r_reps) run.replicates = run_reps;
        if (*r_threads) run.threads = run_threads;
        if (*r_seed) run.seed = run_seed;
        return atsd::cmd_run(run, std::cout, std::cerr);
    }
    if (v->parsed()) return atsd::cmd_verify(suite, std::cout, std::cerr);
    if (c->parsed()) return atsd::cmd_cost_plan(cp, std::cout, std::cerr);
    if (k->parsed()) {
        if (!cal_out.empty()) cal.out = cal_out;
        if (*k_restarts) cal.restarts = cal_restarts;
        if (*k_seed) cal.seed = cal_seed;
        return atsd::cmd_calibrate(cal, std::cout, std::cerr);
    }
    return atsd::kExitInternal;
}
