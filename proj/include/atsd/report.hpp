#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "config.hpp"
#include "cost_model.hpp"
#include "montecarlo.hpp"

namespace atsd {

// RFC 4180 field quoting.
inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string csv_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string csv_opt(const std::optional<double>& v) { return v ? csv_real(*v) : std::string(); }

struct ScenarioResult {
    ScenarioConfig scenario;
    EffortPlan plan;
    ExperimentResult result;
};

inline std::string plan_tuple(const ScenarioResult& s) {
    return "(" + std::to_string(s.plan.atsd.n2h1) + "," + std::to_string(s.plan.atsd.d) + "," +
           std::to_string(s.plan.ats.n1) + "," + std::to_string(s.plan.ats.d1) + ")";
}

inline std::string table_csv(const std::vector<ScenarioResult>& results) {
    std::string out =
        "scenario,aux,m,n1h,plan,cost_ratio,estimator,design,replicates,errors,mean,mean_se,variance,mse,mse_se,"
        "eff,eff_se,rbias,rbias_se,fallback_rate,mean_cost,cost_se,mean_var_hat\n";
    for (const auto& s : results) {
        for (const auto& r : s.result.table.rows) {
            out += csv_field(s.scenario.name) + "," + std::string(to_string(s.scenario.aux)) + "," +
                   std::to_string(s.plan.atsd.m) + "," + std::to_string(s.plan.atsd.n1h[0]) + "," +
                   csv_field(plan_tuple(s)) + "," + csv_real(s.plan.cost.ratio()) + "," + csv_field(r.label) + "," +
                   std::string(design_of(r.estimator)) + "," + std::to_string(r.replicates) + "," +
                   std::to_string(r.errors) + "," + csv_real(r.mean) + "," + csv_real(r.mean_se) + "," +
                   csv_real(r.variance) + "," + csv_real(r.mse) + "," + csv_real(r.mse_se) + "," + csv_opt(r.eff) +
                   "," + (r.eff ? csv_real(r.eff_se) : std::string()) + "," + csv_real(r.rbias) + "," +
                   csv_real(r.rbias_se) + "," + csv_real(r.fallback_rate) + "," + csv_real(r.mean_cost) + "," +
                   csv_real(r.cost_se) + "," + csv_opt(r.mean_var_hat) + "\n";
        }
    }
    return out;
}

// Per-replicate reports: replicate,design,estimator,estimate,var_hat,fallback,coefficient
inline std::string replicates_csv(const std::vector<ScenarioResult>& results) {
    std::string out = "scenario,replicate,design,estimator,estimate,var_hat,fallback,coefficient\n";
    for (const auto& s : results)
        for (const auto& r : s.result.records)
            out += csv_field(s.scenario.name) + "," + std::to_string(r.replicate) + "," +
                   std::string(design_of(r.estimator)) + "," + row_label(r.estimator, s.scenario.aux) + "," +
                   (r.error ? std::string() : csv_real(r.estimate)) + "," + csv_opt(r.var_hat) + "," +
                   (r.fallback ? "1" : "0") + "," + csv_opt(r.coefficient) + "\n";
    return out;
}

namespace detail {

inline std::string pad(std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
}

inline std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace detail

// Markdown-compatible tables: one efficiency and one relative-bias block per
// auxiliary variable, scenarios as columns.
inline std::string table_text(const std::vector<ScenarioResult>& results) {
    std::map<int, std::vector<const ScenarioResult*>> by_aux;
    for (const auto& s : results) by_aux[static_cast<int>(s.scenario.aux)].push_back(&s);
    std::string out;
    for (const char* block : {"eff", "rbias"}) {
        const bool eff = std::string_view(block) == "eff";
        for (const auto& [aux, cols] : by_aux) {
            (void)aux;
            const std::size_t w0 = 12, w = 16;
            std::vector<std::string> header = {block};
            for (const auto* c : cols) header.push_back(c->scenario.name);
            auto row = [&](const std::vector<std::string>& cells) {
                std::string line = "|";
                for (std::size_t i = 0; i < cells.size(); ++i) line += " " + detail::pad(cells[i], i ? w : w0) + " |";
                return line + "\n";
            };
            out += row(header);
            std::string sep = "|";
            for (std::size_t i = 0; i < header.size(); ++i) sep += std::string((i ? w : w0) + 2, '-') + "|";
            out += sep + "\n";
            std::vector<std::string> info = {"m, ratio"};
            std::vector<std::string> tuple = {"plan"};
            for (const auto* c : cols) {
                info.push_back(std::to_string(c->plan.atsd.m) + ", " + csv_real(c->plan.cost.ratio()));
                tuple.push_back(plan_tuple(*c));
            }
            out += row(info) + row(tuple);
            for (const auto& r0 : cols.front()->result.table.rows) {
                std::vector<std::string> cells = {r0.label};
                for (const auto* c : cols) {
                    const EstimatorRow* r = c->result.table.find(r0.estimator);
                    if (!r) cells.push_back("");
                    else if (eff) cells.push_back(r->eff ? detail::fixed3(*r->eff) : std::string("undef"));
                    else cells.push_back(detail::fixed3(r->rbias));
                }
                out += row(cells);
            }
            out += "\n";
        }
    }
    return out;
}

inline std::string plan_text(const EffortPlan& p) {
    std::string out;
    auto line = [&](const std::string& k, const std::string& v) { out += detail::pad(k, 28) + v + "\n"; };
    line("cost (c_aux, c_tar)", csv_real(p.cost.c_aux) + ", " + csv_real(p.cost.c_tar));
    line("ATSD (m, n1h, n2h1, d)", std::to_string(p.atsd.m) + ", " + std::to_string(p.atsd.n1h[0]) + ", " +
                                       std::to_string(p.atsd.n2h1) + ", " + std::to_string(p.atsd.d));
    line("ATSD condition", p.atsd.condition.name() + " > 0");
    line("E(n_y)", csv_real(p.expected_ny));
    line("budget E(Cost)", csv_real(p.budget));
    auto slots = [](const std::vector<int>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
        return s;
    };
    line("ATS (m, n1, d1)", std::to_string(p.ats.m) + ", " + std::to_string(p.ats.n1) + ", " + std::to_string(p.ats.d1) +
                                (p.ats.given ? "  [configured]" : ""));
    line("ATS n1 from budget", std::to_string(p.ats.n1_derived));
    line("ATS slot sizes", slots(p.ats.slots));
    line("ATS expected cost", csv_real(p.ats.expected_cost));
    line("two-stage n", std::to_string(p.two_stage.n) + "  slots " + slots(p.two_stage.slots));
    line("two-stage expected cost", csv_real(p.two_stage.expected_cost));
    line("SRSWOR n", std::to_string(p.srs.n));
    line("SRSWOR expected cost", csv_real(p.srs.expected_cost));
    line("Regs n_ytR", std::to_string(p.regs.n) + "  slots " + slots(p.regs.slots));
    line("Regs expected cost", csv_real(p.regs.expected_cost));
    line("max |cost gap| / c_tar", csv_real(p.max_gap() / p.cost.c_tar));
    return out;
}

}  // namespace atsd
