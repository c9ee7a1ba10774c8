#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cost_model.hpp"
#include "designs.hpp"
#include "estimators.hpp"
#include "exact.hpp"
#include "numeric.hpp"
#include "population.hpp"

namespace atsd {

enum class EstimatorId { reg_o, reg_1, reg_opt, reg_b1, ats, regs, srs, two_stage };

inline constexpr EstimatorId kAllEstimators[] = {EstimatorId::reg_o,   EstimatorId::reg_1, EstimatorId::reg_opt,
                                                 EstimatorId::reg_b1,  EstimatorId::ats,   EstimatorId::regs,
                                                 EstimatorId::srs,     EstimatorId::two_stage};

inline std::string_view to_string(EstimatorId e) {
    switch (e) {
        case EstimatorId::reg_o: return "RegO";
        case EstimatorId::reg_1: return "Reg1";
        case EstimatorId::reg_opt: return "Regopt";
        case EstimatorId::reg_b1: return "Regb1";
        case EstimatorId::ats: return "ATS";
        case EstimatorId::regs: return "Regs";
        case EstimatorId::srs: return "SRS";
        case EstimatorId::two_stage: return "TwoStage";
    }
    return "?";
}

inline EstimatorId parse_estimator(std::string_view s) {
    for (EstimatorId e : kAllEstimators)
        if (s == to_string(e)) return e;
    if (s == "ybar_s") return EstimatorId::srs;
    throw std::invalid_argument("unknown estimator '" + std::string(s) + "'");
}

// Design that produces an estimator's draws.
inline std::string_view design_of(EstimatorId e) {
    switch (e) {
        case EstimatorId::reg_o:
        case EstimatorId::reg_1:
        case EstimatorId::reg_opt:
        case EstimatorId::reg_b1: return "ATSD";
        case EstimatorId::ats: return "ATS";
        case EstimatorId::regs: return "TSD";
        case EstimatorId::srs: return "SRSWOR";
        case EstimatorId::two_stage: return "TS";
    }
    return "?";
}

// Row label as printed in tables: auxiliary-dependent rows carry a suffix.
inline std::string row_label(EstimatorId e, Variable aux) {
    if (e == EstimatorId::srs) return "ybar_s";
    if (e == EstimatorId::two_stage) return "TS";
    return std::string(to_string(e)) + "_" + std::string(to_string(aux));
}

inline const std::vector<EstimatorId>& default_estimators() {
    static const std::vector<EstimatorId> list = {EstimatorId::reg_o,  EstimatorId::reg_1, EstimatorId::reg_opt,
                                                  EstimatorId::reg_b1, EstimatorId::ats,   EstimatorId::regs,
                                                  EstimatorId::srs};
    return list;
}

struct ExperimentConfig {
    EffortPlan plan;
    Variable aux = Variable::x;
    long replicates = 10000;
    std::uint64_t master_seed = 20240601;
    std::vector<EstimatorId> estimators = default_estimators();
    int threads = 1;
    ExactOptions exact;  // for the design-optimal oracle coefficient
    bool keep_replicates = false;

    void validate(const Population& pop) const {
        if (replicates < 1) throw std::invalid_argument("experiment: replicates must be >= 1");
        if (estimators.empty()) throw std::invalid_argument("experiment: estimator list is empty");
        if (threads < 1) throw std::invalid_argument("experiment: threads must be >= 1");
        plan.atsd.validate(pop);
    }
};

// One estimator outcome on one replicate.
struct ReplicateRecord {
    long replicate = 0;
    EstimatorId estimator = EstimatorId::srs;
    double estimate = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> var_hat;
    bool fallback = false;
    std::optional<double> coefficient;
    double cost = 0.0;
    bool error = false;
};

// Oracle coefficients computed once per experiment.
struct OracleCoefficients {
    RegressionCoefficient beta1;
    RegressionCoefficient beta_o;
    double beta_o_cov = 0.0;
    double beta_o_var = 0.0;
    bool beta_o_exact = true;
};

inline OracleCoefficients oracle_coefficients(const Population& pop, const AtsdParams& params, Variable aux,
                                              const ExactOptions& opt) {
    OracleCoefficients o;
    o.beta1.kind = RegressionCoefficient::Kind::beta1_pop;
    o.beta_o.kind = RegressionCoefficient::Kind::beta_opt_pop;
    try {
        o.beta1.value = beta_pop(pop, aux);
    } catch (const std::invalid_argument&) {
        o.beta1.degenerate = true;
    }
    try {
        const BetaOptimal b = beta_opt_pop(pop, params, aux, opt);
        o.beta_o.value = b.value;
        o.beta_o_cov = b.cov;
        o.beta_o_var = b.var;
        o.beta_o_exact = b.exact;
    } catch (const std::invalid_argument&) {
        o.beta_o.degenerate = true;
    }
    return o;
}

// Evaluates every requested estimator on replicate r. Each design draws from
// its own substream of stream r, so adding or removing estimators never
// changes the draws of the others.
inline std::vector<ReplicateRecord> run_replicate(const Population& pop, const ExperimentConfig& cfg,
                                                  const OracleCoefficients& oracle, long r) {
    const DrawRng root(cfg.master_seed, static_cast<std::uint64_t>(r));
    const CostSpec& cost = cfg.plan.cost;
    const AtsdParams& atsd = cfg.plan.atsd;
    const int m = atsd.m;
    auto wants = [&](EstimatorId e) {
        return std::find(cfg.estimators.begin(), cfg.estimators.end(), e) != cfg.estimators.end();
    };
    std::vector<ReplicateRecord> out;
    auto record = [&](EstimatorId e) -> ReplicateRecord& {
        ReplicateRecord rec;
        rec.replicate = r;
        rec.estimator = e;
        out.push_back(rec);
        return out.back();
    };
    auto fill = [](ReplicateRecord& rec, const EstimatorReport& rep, double c) {
        rec.estimate = rep.estimate;
        rec.var_hat = rep.var_hat;
        rec.fallback = rep.fallback_used;
        if (rep.coefficient.kind != RegressionCoefficient::Kind::fixed && !rep.coefficient.degenerate)
            rec.coefficient = rep.coefficient.value;
        rec.cost = c;
        rec.error = !std::isfinite(rep.estimate);
    };
    auto guarded = [&](std::initializer_list<EstimatorId> ids, auto&& body) {
        try {
            body();
        } catch (const std::exception&) {
            for (EstimatorId e : ids)
                if (wants(e)) record(e).error = true;
        }
    };

    const EstimatorId atsd_ids[] = {EstimatorId::reg_o, EstimatorId::reg_1, EstimatorId::reg_opt, EstimatorId::reg_b1};
    if (std::any_of(std::begin(atsd_ids), std::end(atsd_ids), wants)) {
        guarded({EstimatorId::reg_o, EstimatorId::reg_1, EstimatorId::reg_opt, EstimatorId::reg_b1}, [&] {
            DrawRng rng = root.substream(0);
            const AtsdSample d = run_atsd(pop, atsd, rng);
            const DrawSummary s = summarize(d, cfg.aux);
            const double c = cost.c_aux * d.n_aux() + cost.c_tar * d.n_y();
            std::vector<std::pair<EstimatorId, EstimatorReport>> reps;
            if (wants(EstimatorId::reg_o)) reps.emplace_back(EstimatorId::reg_o, mu_reg(s, oracle.beta_o));
            if (wants(EstimatorId::reg_1)) reps.emplace_back(EstimatorId::reg_1, mu_reg(s, oracle.beta1));
            if (wants(EstimatorId::reg_opt)) reps.emplace_back(EstimatorId::reg_opt, mu_reg(s, beta_opt_hat(s)));
            if (wants(EstimatorId::reg_b1)) reps.emplace_back(EstimatorId::reg_b1, mu_reg(s, beta1_hat(s)));
            for (const auto& [e, rep] : reps) fill(record(e), rep, c);
        });
    }
    if (wants(EstimatorId::ats)) {
        guarded({EstimatorId::ats}, [&] {
            DrawRng rng = root.substream(1);
            const AtsdSample d = run_ats(pop, m, cfg.plan.ats.slots, cfg.plan.ats.d1, rng);
            fill(record(EstimatorId::ats), murthy_mean(summarize(d, Variable::y)), cost.c_tar * d.n_y());
        });
    }
    if (wants(EstimatorId::regs)) {
        guarded({EstimatorId::regs}, [&] {
            DrawRng rng = root.substream(2);
            const TwoPhaseSample d = run_two_stage_double(pop, m, atsd.n1h, cfg.plan.regs.slots, rng);
            fill(record(EstimatorId::regs), regs_estimate(d, cfg.aux), cost.c_aux * d.n_aux() + cost.c_tar * d.n_y());
        });
    }
    if (wants(EstimatorId::srs)) {
        guarded({EstimatorId::srs}, [&] {
            DrawRng rng = root.substream(3);
            const SrsSample d = run_srswor_design(pop, cfg.plan.srs.n, rng);
            fill(record(EstimatorId::srs), srs_mean(d), cost.c_tar * d.n_y());
        });
    }
    if (wants(EstimatorId::two_stage)) {
        guarded({EstimatorId::two_stage}, [&] {
            DrawRng rng = root.substream(4);
            const TwoStageSample d = run_two_stage(pop, m, cfg.plan.two_stage.slots, rng);
            fill(record(EstimatorId::two_stage), two_stage_mean(d), cost.c_tar * d.n_y());
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

// Order-independent mean and dispersion of a sample: values are sorted and
// summed with compensation, so any permutation gives identical bits.
struct SampleSummary {
    double n = 0.0;
    double mean = 0.0;
    double variance = 0.0;  // divisor n
    double se_mean = 0.0;   // sd (divisor n - 1) / sqrt(n)
};

inline SampleSummary summarize_sample(std::vector<double> v) {
    SampleSummary s;
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    s.n = static_cast<double>(v.size());
    s.mean = compensated_sum(v) / s.n;
    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = (v[i] - s.mean) * (v[i] - s.mean);
    std::sort(dev.begin(), dev.end());
    const double ss = compensated_sum(dev);
    s.variance = ss / s.n;
    s.se_mean = v.size() > 1 ? std::sqrt(ss / (s.n - 1.0) / s.n) : 0.0;
    return s;
}

struct EstimatorRow {
    EstimatorId estimator = EstimatorId::srs;
    std::string label;
    long replicates = 0;
    long errors = 0;
    double mean = 0.0, mean_se = 0.0;
    double variance = 0.0;
    double mse = 0.0, mse_se = 0.0;
    std::optional<double> eff;
    double eff_se = 0.0;
    double rbias = 0.0, rbias_se = 0.0;
    double fallback_rate = 0.0;
    double mean_cost = 0.0, cost_se = 0.0;
    std::optional<double> mean_var_hat;
};

struct ExperimentTable {
    double true_mean = 0.0;
    Variable aux = Variable::x;
    std::optional<double> reference_mse;  // var(ȳ_s): empirical, around Ȳ_N
    std::optional<double> reference_closed_form;  // (1 - n/N) S²_y / n
    std::vector<EstimatorRow> rows;
    long replicates = 0;
    long errored = 0;
    bool quality_ok = true;

    const EstimatorRow* find(EstimatorId e) const {
        for (const auto& r : rows)
            if (r.estimator == e) return &r;
        return nullptr;
    }
};

inline constexpr double kMaxErrorRate = 0.01;

// Builds the table from per-replicate records in any order. eff uses the
// SRSWOR arm's empirical MSE around Ȳ_N as var(ȳ_s).
inline ExperimentTable aggregate(const std::vector<ReplicateRecord>& records, const std::vector<EstimatorId>& order,
                                 double true_mean, Variable aux) {
    ExperimentTable t;
    t.true_mean = true_mean;
    t.aux = aux;
    long max_rep = -1;
    std::vector<long> errored_reps;
    for (EstimatorId e : order) {
        EstimatorRow row;
        row.estimator = e;
        row.label = row_label(e, aux);
        std::vector<double> est, sq_err, cost, vhat;
        double fallbacks = 0.0;
        for (const auto& r : records) {
            if (r.estimator != e) continue;
            ++row.replicates;
            max_rep = std::max(max_rep, r.replicate);
            if (r.error) {
                ++row.errors;
                errored_reps.push_back(r.replicate);
                continue;
            }
            est.push_back(r.estimate);
            sq_err.push_back((r.estimate - true_mean) * (r.estimate - true_mean));
            cost.push_back(r.cost);
            if (r.var_hat) vhat.push_back(*r.var_hat);
            fallbacks += r.fallback ? 1.0 : 0.0;
        }
        const SampleSummary se = summarize_sample(est);
        const SampleSummary sq = summarize_sample(sq_err);
        const SampleSummary sc = summarize_sample(cost);
        row.mean = se.mean;
        row.mean_se = se.se_mean;
        row.variance = se.variance;
        row.mse = sq.mean;
        row.mse_se = sq.se_mean;
        row.rbias = true_mean != 0.0 ? (se.mean - true_mean) / true_mean : 0.0;
        row.rbias_se = true_mean != 0.0 ? se.se_mean / std::fabs(true_mean) : 0.0;
        row.fallback_rate = est.empty() ? 0.0 : fallbacks / static_cast<double>(est.size());
        row.mean_cost = sc.mean;
        row.cost_se = sc.se_mean;
        if (!vhat.empty()) row.mean_var_hat = summarize_sample(vhat).mean;
        t.rows.push_back(row);
    }
    const EstimatorRow* ref = t.find(EstimatorId::srs);
    if (ref && ref->replicates > ref->errors) t.reference_mse = ref->mse;
    for (auto& row : t.rows) {
        if (!t.reference_mse || !(row.mse > 0.0)) continue;
        row.eff = *t.reference_mse / row.mse;
        if (row.estimator == EstimatorId::srs) continue;  // exactly 1, no error bar
        const double ra = ref->mse > 0.0 ? ref->mse_se / ref->mse : 0.0;
        const double rb = row.mse_se / row.mse;
        row.eff_se = *row.eff * std::sqrt(ra * ra + rb * rb);
    }
    std::sort(errored_reps.begin(), errored_reps.end());
    errored_reps.erase(std::unique(errored_reps.begin(), errored_reps.end()), errored_reps.end());
    t.replicates = max_rep + 1;
    t.errored = static_cast<long>(errored_reps.size());
    t.quality_ok = t.replicates == 0 || static_cast<double>(t.errored) <= kMaxErrorRate * static_cast<double>(t.replicates);
    return t;
}

struct ExperimentResult {
    ExperimentTable table;
    OracleCoefficients oracle;
    std::vector<ReplicateRecord> records;  // kept when requested
};

// Replicates run on `threads` workers over disjoint replicate indices; the
// result is independent of the worker count.
inline ExperimentResult run_experiment(const Population& pop, const ExperimentConfig& cfg) {
    cfg.validate(pop);
    ExperimentResult res;
    const bool needs_oracle = std::any_of(cfg.estimators.begin(), cfg.estimators.end(), [](EstimatorId e) {
        return e == EstimatorId::reg_o || e == EstimatorId::reg_1;
    });
    if (needs_oracle) res.oracle = oracle_coefficients(pop, cfg.plan.atsd, cfg.aux, cfg.exact);

    const long R = cfg.replicates;
    std::vector<std::vector<ReplicateRecord>> per_rep(static_cast<std::size_t>(R));
    std::atomic<long> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        try {
            for (long r = next.fetch_add(1); r < R && !failed.load(); r = next.fetch_add(1))
                per_rep[static_cast<std::size_t>(r)] = run_replicate(pop, cfg, res.oracle, r);
        } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
        }
    };
    const int nthreads = static_cast<int>(std::min<long>(cfg.threads, R));
    std::vector<std::thread> pool;
    for (int i = 1; i < nthreads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<ReplicateRecord> flat;
    for (auto& v : per_rep)
        for (auto& rec : v) flat.push_back(std::move(rec));
    res.table = aggregate(flat, cfg.estimators, pop.mean(Variable::y), cfg.aux);
    if (std::find(cfg.estimators.begin(), cfg.estimators.end(), EstimatorId::srs) != cfg.estimators.end()) {
        const double n = cfg.plan.srs.n, N = pop.size();
        res.table.reference_closed_form = (1.0 - n / N) * compute_stats(pop).variance_of(Variable::y) / n;
    }
    if (cfg.keep_replicates) res.records = std::move(flat);
    return res;
}

}  // namespace atsd
