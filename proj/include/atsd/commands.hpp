#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "atsd.hpp"

namespace atsd {

// Stable process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitQuality = 3;
inline constexpr int kExitInternal = 4;

// Maps exceptions escaping a command onto the exit-code contract.
inline int run_guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const OutputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

// ATSD_SEED, when set, overrides configured seeds; an explicit --seed wins.
inline std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("ATSD_SEED");
    if (!v || !*v) return std::nullopt;
    char* end = nullptr;
    errno = 0;
    const unsigned long long s = std::strtoull(v, &end, 0);
    if (*end || errno || v[0] == '-') throw ConfigError(std::string("ATSD_SEED: not an unsigned integer ('") + v + "')");
    return s;
}

inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t configured) {
    if (flag) return *flag;
    if (auto e = env_seed()) return *e;
    return configured;
}

namespace detail {

inline std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string fixed(double v, int digits = 3) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace detail

// Table-1 style summary plus calibration target checks.
inline std::string stats_report(const Population& pop, const CalibrationTargets& targets, bool* all_pass = nullptr) {
    const PopulationStats s = compute_stats(pop);
    std::string out = "population: N=" + std::to_string(pop.size()) + " M=" + std::to_string(pop.psu_count()) +
                      " grid=" + std::to_string(pop.grid_side()) + " seed=" + std::to_string(pop.seed()) + "\n";
    out += "             y        x        z        w\n";
    auto row = [&](const char* name, auto&& cell) {
        out += detail::pad(name, 10);
        for (Variable v : {Variable::y, Variable::x, Variable::z, Variable::w}) {
            std::string c = cell(v);
            out += std::string(c.size() < 9 ? 9 - c.size() : 1, ' ') + c;
        }
        out += "\n";
    };
    row("mean", [&](Variable v) { return detail::fixed(s.mean_of(v)); });
    row("variance", [&](Variable v) { return detail::fixed(s.variance_of(v)); });
    row("corr(.,y)", [&](Variable v) -> std::string {
        const std::optional<double>* c = v == Variable::x ? &s.corr_xy : v == Variable::z ? &s.corr_zy
                                         : v == Variable::w ? &s.corr_wy : nullptr;
        if (!c) return "";
        return *c ? detail::fixed(**c) : std::string("undef");
    });
    out += "rarity of y > 0 per PSU:";
    for (double p : s.rarity) out += " " + detail::fixed(p);
    out += "\n";
    bool pass = true;
    const auto checks = check_targets(s, targets);
    if (!checks.empty()) out += "targets:\n";
    for (const auto& c : checks) {
        pass = pass && c.pass;
        const std::string range = std::isinf(c.range.hi)   ? ">= " + csv_real(c.range.lo)
                                  : std::isinf(c.range.lo) ? "<= " + csv_real(c.range.hi)
                                                           : "[" + csv_real(c.range.lo) + ", " + csv_real(c.range.hi) + "]";
        out += std::string("  ") + (c.pass ? "PASS " : "FAIL ") + detail::pad(c.name, 8) + " " +
               (c.value ? detail::fixed(*c.value) : std::string("undef")) + "  target " + range + "\n";
    }
    if (all_pass) *all_pass = pass;
    return out;
}

// Population of a configuration: loaded from file, or generated with the
// resolved seed.
inline Population config_population(const RunConfig& rc, std::optional<std::uint64_t> seed_flag = std::nullopt) {
    if (rc.population_file) {
        if (seed_flag) throw ConfigError("--seed cannot re-seed a population loaded from file");
        return load_population(*rc.population_file);
    }
    PopulationSpec spec = rc.population;
    spec.seed = resolve_seed(seed_flag, spec.seed);
    return generate_population(spec);
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateOptions {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
};

inline int cmd_generate(const GenerateOptions& o, std::ostream& out, std::ostream& err) {
    return run_guarded([&] {
        const RunConfig rc = load_config(o.config);
        const Population pop = config_population(rc, o.seed);
        if (o.out) {
            save_population(pop, *o.out);
            out << "wrote " << o.out->string() << " (checksum " << hex64(fnv1a64(serialize_population(pop))) << ")\n";
        }
        out << stats_report(pop, rc.targets);
        return kExitOk;
    }, err);
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunOptions {
    std::filesystem::path config;
    std::optional<long> replicates;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out_dir = "results";
    std::vector<std::string> scenarios;  // empty = all
    bool keep_replicates = false;
    bool quiet = false;
};

struct RunOutcome {
    RunConfig resolved;
    std::vector<ScenarioResult> results;
    bool quality_ok = true;
};

// Seed of population block k when the experiment replicates populations.
inline std::uint64_t population_block_seed(std::uint64_t base, int k) {
    if (k == 0) return base;
    DrawRng rng(base, 0x9090 + static_cast<std::uint64_t>(k));
    return rng.next();
}

// Runs every scenario of a resolved configuration.
inline RunOutcome execute_run(const RunConfig& rc) {
    if (rc.populations > 1 && rc.population_file)
        throw ConfigError("populations > 1 needs a generated population, not a population file");
    RunOutcome o;
    o.resolved = rc;
    for (int k = 0; k < rc.populations; ++k) {
        Population pop = [&] {
            if (rc.population_file) return load_population(*rc.population_file);
            PopulationSpec spec = rc.population;
            spec.seed = population_block_seed(spec.seed, k);
            return generate_population(spec);
        }();
        for (const ScenarioConfig& sc : rc.scenarios) {
            ExperimentConfig ec = experiment_config(rc, sc, pop);
            ScenarioResult r{sc, ec.plan, run_experiment(pop, ec)};
            if (rc.populations > 1) r.scenario.name += "@pop" + std::to_string(k);
            o.quality_ok = o.quality_ok && r.result.table.quality_ok;
            o.results.push_back(std::move(r));
        }
    }
    return o;
}

inline RunConfig apply_run_overrides(RunConfig rc, const RunOptions& o) {
    if (o.replicates) {
        if (*o.replicates < 1) throw ConfigError("--replicates must be >= 1");
        rc.replicates = *o.replicates;
    }
    if (o.threads) {
        if (*o.threads < 1) throw ConfigError("--threads must be >= 1");
        rc.threads = *o.threads;
    }
    rc.seed = resolve_seed(o.seed, rc.seed);
    if (o.keep_replicates) rc.keep_replicates = true;
    if (!o.scenarios.empty()) {
        std::vector<ScenarioConfig> keep;
        for (const auto& name : o.scenarios) {
            bool found = false;
            for (const auto& s : rc.scenarios)
                if (s.name == name) {
                    keep.push_back(s);
                    found = true;
                }
            if (!found) throw ConfigError("unknown scenario '" + name + "'");
        }
        rc.scenarios = keep;
    }
    return rc;
}

inline nlohmann::json plan_json(const EffortPlan& p) {
    return {{"c_aux", p.cost.c_aux},
            {"c_tar", p.cost.c_tar},
            {"atsd", {{"m", p.atsd.m}, {"n1h", p.atsd.n1h}, {"n2h1", p.atsd.n2h1}, {"d", p.atsd.d},
                      {"condition", p.atsd.condition.name()}}},
            {"expected_ny", p.expected_ny},
            {"budget", p.budget},
            {"ats", {{"m", p.ats.m}, {"n1", p.ats.n1}, {"n1_derived", p.ats.n1_derived}, {"d1", p.ats.d1},
                     {"configured", p.ats.given}, {"slots", p.ats.slots}, {"expected_cost", p.ats.expected_cost}}},
            {"two_stage", {{"n", p.two_stage.n}, {"slots", p.two_stage.slots}, {"expected_cost", p.two_stage.expected_cost}}},
            {"srswor", {{"n", p.srs.n}, {"expected_cost", p.srs.expected_cost}}},
            {"regs", {{"n_ytR", p.regs.n}, {"slots", p.regs.slots}, {"expected_cost", p.regs.expected_cost}}},
            {"max_cost_gap", p.max_gap()}};
}

inline int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
    return run_guarded([&] {
        const std::string started = detail::utc_now();
        const auto t0 = std::chrono::steady_clock::now();
        const RunConfig rc = apply_run_overrides(load_config(o.config), o);
        const RunOutcome outcome = execute_run(rc);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        std::error_code ec;
        std::filesystem::create_directories(o.out_dir, ec);
        if (ec) throw OutputError("cannot create output directory '" + o.out_dir.string() + "'");

        std::vector<std::pair<std::string, std::string>> files = {
            {"table.csv", table_csv(outcome.results)},
            {"table.txt", table_text(outcome.results)},
            {"resolved.cfg", config_text(rc)},
        };
        if (rc.keep_replicates) files.emplace_back("replicates.csv", replicates_csv(outcome.results));
        for (const auto& [name, text] : files) write_file_atomic(o.out_dir / name, text);

        nlohmann::json m;
        m["tool"] = "atsd";
        m["version"] = ATSD_VERSION;
        m["command"] = "run";
        m["config"] = std::filesystem::absolute(o.config).string();
        m["resolved_config"] = "resolved.cfg";
        m["reproduce"] = "atsd run resolved.cfg --out-dir <dir>";
        m["seeds"] = {{"master", rc.seed}, {"population", rc.population.seed}, {"exact", rc.exact_seed}};
        m["replicates"] = rc.replicates;
        m["threads"] = rc.threads;
        m["populations"] = rc.populations;
        m["population_source"] = rc.population_file ? rc.population_file->string() : std::string("generated");
        nlohmann::json scen = nlohmann::json::array();
        for (const auto& r : outcome.results) {
            const auto& t = r.result.table;
            const auto& orc = r.result.oracle;
            nlohmann::json s = {{"name", r.scenario.name},
                                {"aux", std::string(to_string(r.scenario.aux))},
                                {"plan", plan_json(r.plan)},
                                {"quality_ok", t.quality_ok},
                                {"errored_replicates", t.errored},
                                {"true_mean", t.true_mean}};
            s["oracle"] = {{"beta1", orc.beta1.degenerate ? nlohmann::json() : nlohmann::json(orc.beta1.value)},
                           {"beta_o", orc.beta_o.degenerate ? nlohmann::json() : nlohmann::json(orc.beta_o.value)},
                           {"beta_o_exact", orc.beta_o_exact}};
            s["reference_mse"] = t.reference_mse ? nlohmann::json(*t.reference_mse) : nlohmann::json();
            s["reference_closed_form"] =
                t.reference_closed_form ? nlohmann::json(*t.reference_closed_form) : nlohmann::json();
            scen.push_back(s);
        }
        m["scenarios"] = scen;
        nlohmann::json outs = nlohmann::json::array();
        for (const auto& [name, text] : files) outs.push_back({{"file", name}, {"fnv64", hex64(fnv1a64(text))}});
        m["outputs"] = outs;
        m["started_utc"] = started;
        m["finished_utc"] = detail::utc_now();
        m["wall_seconds"] = wall;
        m["quality_ok"] = outcome.quality_ok;
        write_file_atomic(o.out_dir / "manifest.json", m.dump(2) + "\n");

        if (!o.quiet) out << table_text(outcome.results);
        out << "wrote " << (o.out_dir / "table.csv").string() << " and manifest.json\n";
        if (!outcome.quality_ok) {
            err << "error: more than " << kMaxErrorRate * 100.0 << "% of replicates errored in at least one scenario\n";
            return kExitQuality;
        }
        return kExitOk;
    }, err);
}

// ---------------------------------------------------------------------------
// verify, cost-plan, calibrate
// ---------------------------------------------------------------------------

inline int cmd_verify(const std::string& suite, std::ostream& out, std::ostream& err) {
    return run_guarded([&] {
        std::vector<std::string> names;
        if (suite == "all") names = verify_suites();
        else names.push_back(suite);
        bool ok = true;
        for (const auto& n : names) {
            const VerifyReport r = run_verify_suite(n);
            out << "== suite " << r.suite << "\n";
            for (const auto& line : r.lines) out << line << "\n";
            out << "== " << r.suite << ": " << r.passed << " passed, " << r.failed << " failed\n";
            ok = ok && r.ok();
        }
        return ok ? kExitOk : kExitQuality;
    }, err);
}

struct CostPlanOptions {
    std::filesystem::path config;
    std::vector<std::string> scenarios;
};

inline int cmd_cost_plan(const CostPlanOptions& o, std::ostream& out, std::ostream& err) {
    return run_guarded([&] {
        RunOptions ro;
        ro.scenarios = o.scenarios;
        const RunConfig rc = apply_run_overrides(load_config(o.config), ro);
        const Population pop = config_population(rc);
        for (const auto& s : rc.scenarios) {
            out << "== scenario " << s.name << " (aux " << to_string(s.aux) << ")\n";
            out << plan_text(scenario_plan(pop, s));
        }
        return kExitOk;
    }, err);
}

struct CalibrateOptions {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<int> restarts;
    std::optional<std::uint64_t> seed;
};

inline int cmd_calibrate(const CalibrateOptions& o, std::ostream& out, std::ostream& err) {
    return run_guarded([&] {
        RunConfig rc = load_config(o.config);
        if (rc.population_file) throw ConfigError("calibrate needs a generator spec, not a population file");
        if (rc.goal.empty()) throw ConfigError("calibrate needs a [calibration] section with goal statistics");
        if (o.restarts) {
            if (*o.restarts < 1) throw ConfigError("--restarts must be >= 1");
            rc.goal.restarts = *o.restarts;
            rc.goal.refine_steps = *o.restarts;
        }
        if (o.seed) rc.goal.seed = *o.seed;
        const CalibrationResult res = calibrate(rc.population, rc.goal, rc.targets);
        RunConfig found;
        found.population = res.spec;
        std::string text = config_text(found);
        text = text.substr(0, text.find("\n[experiment]")) + "\n";
        out << "score " << res.score << " after " << res.evaluations << " evaluations, targets "
            << (res.accepted ? "met" : "NOT met") << "\n";
        out << stats_report(generate_population(res.spec), rc.targets);
        if (o.out) {
            write_file_atomic(*o.out, text);
            out << "wrote " << o.out->string() << "\n";
        } else {
            out << "\n" << text;
        }
        return res.accepted ? kExitOk : kExitQuality;
    }, err);
}

}  // namespace atsd
