#pragma once

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "calibration.hpp"
#include "cost_model.hpp"
#include "montecarlo.hpp"
#include "population.hpp"
#include "population_io.hpp"

namespace atsd {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Line-oriented `key = value` files with `[section]` or `[section name]`
// headers. '#' and ';' start comments.
// ---------------------------------------------------------------------------

struct IniEntry {
    std::string key;
    std::string value;
    int line = 0;
};

struct IniSection {
    std::string name;
    std::string arg;  // e.g. scenario name
    int line = 0;
    std::vector<IniEntry> entries;

    const IniEntry* find(std::string_view key) const {
        const IniEntry* hit = nullptr;
        for (const auto& e : entries)
            if (e.key == key) hit = &e;
        return hit;
    }
};

struct IniFile {
    std::string origin;
    std::vector<IniSection> sections;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline IniFile parse_ini(std::string_view text, std::string origin = "<config>") {
    IniFile f;
    f.origin = origin;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto hash = raw.find_first_of("#;");
        const std::string line = detail::trim(raw.substr(0, hash));
        if (line.empty()) continue;
        auto where = [&] { return origin + ":" + std::to_string(line_no) + ": "; };
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
            const std::string inner = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            if (inner.empty()) throw ConfigError(where() + "empty section header");
            IniSection s;
            s.line = line_no;
            const auto sp = inner.find_first_of(" \t");
            s.name = inner.substr(0, sp);
            if (sp != std::string::npos) s.arg = detail::trim(std::string_view(inner).substr(sp));
            f.sections.push_back(std::move(s));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value'");
        if (f.sections.empty()) throw ConfigError(where() + "key outside of any section");
        IniEntry e{detail::trim(std::string_view(line).substr(0, eq)), detail::trim(std::string_view(line).substr(eq + 1)),
                   line_no};
        if (e.key.empty()) throw ConfigError(where() + "empty key");
        f.sections.back().entries.push_back(std::move(e));
    }
    return f;
}

// ---------------------------------------------------------------------------
// Typed configuration
// ---------------------------------------------------------------------------

struct ScenarioConfig {
    std::string name = "default";
    Variable aux = Variable::x;
    std::optional<Condition> condition;  // defaults to aux > 0
    int m = 4;
    int n1h = 50;
    int n2h1 = 10;
    int d = 4;
    int ats_n1 = 0;  // 0 = derive from the budget
    int ats_d1 = 10;
    CostSpec cost{1.0, 10.0};

    Condition resolved_condition() const { return condition.value_or(Condition{aux, false, 0.0}); }
};

struct RunConfig {
    std::optional<std::filesystem::path> population_file;
    PopulationSpec population;
    CalibrationTargets targets;
    CalibrationGoal goal;
    long replicates = 10000;
    std::uint64_t seed = 20240601;
    int threads = 1;
    bool keep_replicates = false;  // also write per-replicate reports
    int populations = 1;           // > 1 regenerates the population per block
    std::vector<EstimatorId> estimators = default_estimators();
    int exact_draws = 10000;
    std::uint64_t exact_seed = ExactOptions{}.seed;
    std::vector<ScenarioConfig> scenarios;
};

namespace detail {

[[noreturn]] inline void bad_value(const IniFile& f, const IniEntry& e, std::string_view what) {
    throw ConfigError(f.origin + ":" + std::to_string(e.line) + ": " + e.key + ": " + std::string(what) + " ('" +
                      e.value + "')");
}

inline double to_real(const IniFile& f, const IniEntry& e) {
    char* end = nullptr;
    const double v = std::strtod(e.value.c_str(), &end);
    if (e.value.empty() || end != e.value.c_str() + e.value.size() || !std::isfinite(v))
        bad_value(f, e, "expected a real number");
    return v;
}

inline long long to_int(const IniFile& f, const IniEntry& e) {
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(e.value.c_str(), &end, 10);
    if (e.value.empty() || end != e.value.c_str() + e.value.size() || errno) bad_value(f, e, "expected an integer");
    return v;
}

inline std::uint64_t to_u64(const IniFile& f, const IniEntry& e) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(e.value.c_str(), &end, 0);
    if (e.value.empty() || e.value[0] == '-' || end != e.value.c_str() + e.value.size() || errno)
        bad_value(f, e, "expected an unsigned integer");
    return v;
}

inline bool to_bool(const IniFile& f, const IniEntry& e) {
    if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
    if (e.value == "false" || e.value == "0" || e.value == "no") return false;
    bad_value(f, e, "expected true or false");
}

// "lo hi", ">= lo" or "<= hi".
inline Range to_range(const IniFile& f, const IniEntry& e) {
    std::string v = e.value;
    Range r;
    auto parse = [&](const std::string& s) {
        IniEntry tmp = e;
        tmp.value = trim(s);
        return to_real(f, tmp);
    };
    if (v.rfind(">=", 0) == 0) {
        r.lo = parse(v.substr(2));
    } else if (v.rfind("<=", 0) == 0) {
        r.hi = parse(v.substr(2));
    } else {
        const auto sp = v.find_first_of(" \t,");
        if (sp == std::string::npos) bad_value(f, e, "expected 'lo hi', '>= lo' or '<= hi'");
        r.lo = parse(v.substr(0, sp));
        r.hi = parse(v.substr(sp + 1));
        if (r.lo > r.hi) bad_value(f, e, "empty range");
    }
    return r;
}

inline int to_int_checked(const IniFile& f, const IniEntry& e, long long lo, long long hi) {
    const long long v = to_int(f, e);
    if (v < lo || v > hi) bad_value(f, e, "out of range");
    return static_cast<int>(v);
}

inline void apply_aux(const IniFile& f, const IniSection& s, AuxiliaryModel& a) {
    for (const auto& e : s.entries) {
        if (e.key == "keep") a.keep = to_real(f, e);
        else if (e.key == "extra_per_cluster") a.extra_per_cluster = to_real(f, e);
        else if (e.key == "extra_dispersion") a.extra_dispersion = to_real(f, e);
        else if (e.key == "noise_clusters") a.noise_clusters = to_real(f, e);
        else if (e.key == "noise_points") a.noise_points = to_real(f, e);
        else if (e.key == "noise_dispersion") a.noise_dispersion = to_real(f, e);
        else if (e.key == "background") a.background = to_real(f, e);
        else throw ConfigError(f.origin + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "' in [" + s.name + "]");
    }
}

inline void apply_scenario(const IniFile& f, const IniSection& s, ScenarioConfig& sc) {
    for (const auto& e : s.entries) {
        if (e.key == "aux") {
            try {
                sc.aux = parse_variable(e.value);
            } catch (const std::invalid_argument&) {
                bad_value(f, e, "expected x, z or w");
            }
            if (sc.aux == Variable::y) bad_value(f, e, "auxiliary cannot be y");
        } else if (e.key == "condition") {
            try {
                sc.condition = parse_condition(e.value);
            } catch (const std::invalid_argument&) {
                bad_value(f, e, "expected <var> or <var>|y");
            }
        } else if (e.key == "m") sc.m = to_int_checked(f, e, 1, 1 << 20);
        else if (e.key == "n1h") sc.n1h = to_int_checked(f, e, 1, 1 << 30);
        else if (e.key == "n2h1") sc.n2h1 = to_int_checked(f, e, 1, 1 << 30);
        else if (e.key == "d") sc.d = to_int_checked(f, e, 0, 1 << 20);
        else if (e.key == "ats_n1") sc.ats_n1 = e.value == "auto" ? 0 : to_int_checked(f, e, 1, 1 << 30);
        else if (e.key == "ats_d1") sc.ats_d1 = to_int_checked(f, e, 0, 1 << 20);
        else if (e.key == "c_aux") sc.cost.c_aux = to_real(f, e);
        else if (e.key == "c_tar") sc.cost.c_tar = to_real(f, e);
        else if (e.key == "cost_ratio") {
            sc.cost.c_aux = 1.0;
            sc.cost.c_tar = to_real(f, e);
        } else
            throw ConfigError(f.origin + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "' in [" + s.name + "]");
    }
    try {
        sc.cost.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(f.origin + ":" + std::to_string(s.line) + ": " + ex.what());
    }
}

}  // namespace detail

// Resolves a configuration. `[population] include = other.cfg` pulls the
// population, aux.* and targets sections of another file (relative to this
// one); keys given locally override the included values.
inline RunConfig resolve_config(const IniFile& f, const std::filesystem::path& base_dir = {}, int depth = 0) {
    if (depth > 4) throw ConfigError(f.origin + ": include nesting too deep");
    RunConfig cfg;
    ScenarioConfig defaults;
    std::vector<const IniSection*> scenario_sections;
    std::set<std::string> seen;

    // Includes first, so local keys win.
    for (const auto& s : f.sections)
        if (s.name == "population")
            if (const IniEntry* inc = s.find("include")) {
                const std::filesystem::path p = base_dir / inc->value;
                std::string text;
                try {
                    text = read_file(p);
                } catch (const std::exception&) {
                    throw ConfigError(f.origin + ":" + std::to_string(inc->line) + ": cannot read include '" + p.string() + "'");
                }
                const RunConfig inner = resolve_config(parse_ini(text, p.string()), p.parent_path(), depth + 1);
                cfg.population_file = inner.population_file;
                cfg.population = inner.population;
                cfg.targets = inner.targets;
                cfg.goal = inner.goal;
            }

    for (const auto& s : f.sections) {
        const std::string id = s.name + (s.arg.empty() ? "" : " " + s.arg);
        if (s.name != "scenario" && !seen.insert(id).second)
            throw ConfigError(f.origin + ":" + std::to_string(s.line) + ": duplicate section [" + id + "]");
        auto unknown = [&](const IniEntry& e) {
            throw ConfigError(f.origin + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "' in [" + s.name + "]");
        };
        if (s.name == "population") {
            PopulationSpec& p = cfg.population;
            for (const auto& e : s.entries) {
                if (e.key == "include") continue;
                if (e.key == "file") cfg.population_file = base_dir / e.value;
                else if (e.key == "grid_side") p.grid_side = detail::to_int_checked(f, e, 1, 4096);
                else if (e.key == "psus") p.psus = detail::to_int_checked(f, e, 1, 1 << 20);
                else if (e.key == "cluster_rate") p.cluster_rate = detail::to_real(f, e);
                else if (e.key == "points_per_cluster") p.points_per_cluster = detail::to_real(f, e);
                else if (e.key == "dispersion") p.dispersion = detail::to_real(f, e);
                else if (e.key == "seed") p.seed = detail::to_u64(f, e);
                else unknown(e);
            }
        } else if (s.name == "aux.x") {
            detail::apply_aux(f, s, cfg.population.x);
        } else if (s.name == "aux.z") {
            detail::apply_aux(f, s, cfg.population.z);
        } else if (s.name == "targets") {
            CalibrationTargets& t = cfg.targets;
            for (const auto& e : s.entries) {
                if (e.key == "mean_y") t.mean_y = detail::to_range(f, e);
                else if (e.key == "var_y") t.var_y = detail::to_range(f, e);
                else if (e.key == "corr_xy") t.corr_xy = detail::to_range(f, e);
                else if (e.key == "corr_zy") t.corr_zy = detail::to_range(f, e);
                else if (e.key == "mean_x") t.mean_x = detail::to_range(f, e);
                else if (e.key == "mean_z") t.mean_z = detail::to_range(f, e);
                else unknown(e);
            }
        } else if (s.name == "calibration") {
            CalibrationGoal& g = cfg.goal;
            for (const auto& e : s.entries) {
                if (e.key == "mean_y") g.mean_y = detail::to_real(f, e);
                else if (e.key == "var_y") g.var_y = detail::to_real(f, e);
                else if (e.key == "mean_x") g.mean_x = detail::to_real(f, e);
                else if (e.key == "var_x") g.var_x = detail::to_real(f, e);
                else if (e.key == "corr_xy") g.corr_xy = detail::to_real(f, e);
                else if (e.key == "mean_z") g.mean_z = detail::to_real(f, e);
                else if (e.key == "var_z") g.var_z = detail::to_real(f, e);
                else if (e.key == "corr_zy") g.corr_zy = detail::to_real(f, e);
                else if (e.key == "restarts") g.restarts = detail::to_int_checked(f, e, 1, 1 << 30);
                else if (e.key == "refine_steps") g.refine_steps = detail::to_int_checked(f, e, 0, 1 << 30);
                else if (e.key == "seed") g.seed = detail::to_u64(f, e);
                else unknown(e);
            }
        } else if (s.name == "experiment") {
            for (const auto& e : s.entries) {
                if (e.key == "replicates") cfg.replicates = detail::to_int_checked(f, e, 1, 1 << 30);
                else if (e.key == "seed") cfg.seed = detail::to_u64(f, e);
                else if (e.key == "threads") cfg.threads = detail::to_int_checked(f, e, 1, 1024);
                else if (e.key == "keep_replicates") cfg.keep_replicates = detail::to_bool(f, e);
                else if (e.key == "populations") cfg.populations = detail::to_int_checked(f, e, 1, 1 << 20);
                else if (e.key == "exact_draws") cfg.exact_draws = detail::to_int_checked(f, e, 2, 1 << 30);
                else if (e.key == "exact_seed") cfg.exact_seed = detail::to_u64(f, e);
                else if (e.key == "estimators") {
                    cfg.estimators.clear();
                    for (auto part : detail::split(e.value, ',')) {
                        try {
                            cfg.estimators.push_back(parse_estimator(detail::trim(part)));
                        } catch (const std::invalid_argument& ex) {
                            detail::bad_value(f, e, ex.what());
                        }
                    }
                } else unknown(e);
            }
        } else if (s.name == "design") {
            detail::apply_scenario(f, s, defaults);
        } else if (s.name == "scenario") {
            if (s.arg.empty()) throw ConfigError(f.origin + ":" + std::to_string(s.line) + ": scenario needs a name");
            if (!seen.insert(id).second)
                throw ConfigError(f.origin + ":" + std::to_string(s.line) + ": duplicate scenario '" + s.arg + "'");
            scenario_sections.push_back(&s);
        } else {
            throw ConfigError(f.origin + ":" + std::to_string(s.line) + ": unknown section [" + s.name + "]");
        }
    }
    for (const IniSection* s : scenario_sections) {
        ScenarioConfig sc = defaults;
        sc.name = s->arg;
        detail::apply_scenario(f, *s, sc);
        cfg.scenarios.push_back(sc);
    }
    if (cfg.scenarios.empty()) cfg.scenarios.push_back(defaults);
    try {
        if (!cfg.population_file) cfg.population.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(f.origin + ": " + ex.what());
    }
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception&) {
        throw ConfigError("cannot read config '" + path.string() + "'");
    }
    return resolve_config(parse_ini(text, path.string()), path.parent_path());
}

// ---------------------------------------------------------------------------
// Canonical text of a resolved configuration; loading it reproduces the
// same RunConfig.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string range_text(const Range& r) {
    if (std::isinf(r.hi)) return ">= " + format_real(r.lo);
    if (std::isinf(r.lo)) return "<= " + format_real(r.hi);
    return format_real(r.lo) + " " + format_real(r.hi);
}

inline std::string aux_text(const AuxiliaryModel& a) {
    return "keep = " + format_real(a.keep) + "\nextra_per_cluster = " + format_real(a.extra_per_cluster) +
           "\nextra_dispersion = " + format_real(a.extra_dispersion) + "\nnoise_clusters = " +
           format_real(a.noise_clusters) + "\nnoise_points = " + format_real(a.noise_points) +
           "\nnoise_dispersion = " + format_real(a.noise_dispersion) + "\nbackground = " + format_real(a.background) +
           "\n";
}

}  // namespace detail

inline std::string scenario_text(const ScenarioConfig& s) {
    std::string out;
    out += "aux = " + std::string(to_string(s.aux)) + "\n";
    out += "condition = " + s.resolved_condition().name() + "\n";
    out += "m = " + std::to_string(s.m) + "\n";
    out += "n1h = " + std::to_string(s.n1h) + "\n";
    out += "n2h1 = " + std::to_string(s.n2h1) + "\n";
    out += "d = " + std::to_string(s.d) + "\n";
    out += "ats_n1 = " + (s.ats_n1 > 0 ? std::to_string(s.ats_n1) : std::string("auto")) + "\n";
    out += "ats_d1 = " + std::to_string(s.ats_d1) + "\n";
    out += "c_aux = " + format_real(s.cost.c_aux) + "\n";
    out += "c_tar = " + format_real(s.cost.c_tar) + "\n";
    return out;
}

inline std::string config_text(const RunConfig& c) {
    std::string out = "[population]\n";
    if (c.population_file) {
        out += "file = " + std::filesystem::absolute(*c.population_file).string() + "\n";
    } else {
        const PopulationSpec& p = c.population;
        out += "grid_side = " + std::to_string(p.grid_side) + "\npsus = " + std::to_string(p.psus) +
               "\ncluster_rate = " + format_real(p.cluster_rate) + "\npoints_per_cluster = " +
               format_real(p.points_per_cluster) + "\ndispersion = " + format_real(p.dispersion) +
               "\nseed = " + std::to_string(p.seed) + "\n";
        out += "\n[aux.x]\n" + detail::aux_text(p.x) + "\n[aux.z]\n" + detail::aux_text(p.z);
    }
    if (!c.targets.empty()) {
        out += "\n[targets]\n";
        const std::pair<const char*, const std::optional<Range>*> items[] = {
            {"mean_y", &c.targets.mean_y}, {"var_y", &c.targets.var_y},   {"corr_xy", &c.targets.corr_xy},
            {"corr_zy", &c.targets.corr_zy}, {"mean_x", &c.targets.mean_x}, {"mean_z", &c.targets.mean_z}};
        for (const auto& [k, v] : items)
            if (*v) out += std::string(k) + " = " + detail::range_text(**v) + "\n";
    }
    if (!c.goal.empty()) {
        out += "\n[calibration]\n";
        const std::pair<const char*, const std::optional<double>*> goals[] = {
            {"mean_y", &c.goal.mean_y}, {"var_y", &c.goal.var_y},     {"mean_x", &c.goal.mean_x},
            {"var_x", &c.goal.var_x},   {"corr_xy", &c.goal.corr_xy}, {"mean_z", &c.goal.mean_z},
            {"var_z", &c.goal.var_z},   {"corr_zy", &c.goal.corr_zy}};
        for (const auto& [k, v] : goals)
            if (*v) out += std::string(k) + " = " + format_real(**v) + "\n";
        out += "restarts = " + std::to_string(c.goal.restarts) + "\nrefine_steps = " +
               std::to_string(c.goal.refine_steps) + "\nseed = " + std::to_string(c.goal.seed) + "\n";
    }
    out += "\n[experiment]\nreplicates = " + std::to_string(c.replicates) + "\nseed = " + std::to_string(c.seed) +
           "\nthreads = " + std::to_string(c.threads) +
           "\nkeep_replicates = " + (c.keep_replicates ? "true" : "false") +
           "\npopulations = " + std::to_string(c.populations) + "\nexact_draws = " + std::to_string(c.exact_draws) +
           "\nexact_seed = " + std::to_string(c.exact_seed) + "\nestimators = ";
    for (std::size_t i = 0; i < c.estimators.size(); ++i)
        out += (i ? "," : "") + std::string(to_string(c.estimators[i]));
    out += "\n";
    for (const auto& s : c.scenarios) out += "\n[scenario " + s.name + "]\n" + scenario_text(s);
    return out;
}

// Builds the effort plan of one scenario on a population.
inline EffortPlan scenario_plan(const Population& pop, const ScenarioConfig& s) {
    EffortRequest req;
    req.cost = s.cost;
    req.atsd = AtsdParams::equal(pop.psu_count(), s.m, s.n1h, s.n2h1, s.d, s.resolved_condition());
    req.ats_d1 = s.ats_d1;
    req.ats_n1 = s.ats_n1;
    return make_effort_plan(pop, req);
}

inline ExperimentConfig experiment_config(const RunConfig& rc, const ScenarioConfig& s, const Population& pop) {
    ExperimentConfig ec;
    ec.plan = scenario_plan(pop, s);
    ec.aux = s.aux;
    ec.replicates = rc.replicates;
    ec.master_seed = rc.seed;
    ec.estimators = rc.estimators;
    ec.threads = rc.threads;
    ec.keep_replicates = rc.keep_replicates;
    ec.exact.monte_carlo_draws = rc.exact_draws;
    ec.exact.seed = rc.exact_seed;
    return ec;
}

}  // namespace atsd
