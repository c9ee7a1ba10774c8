#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "designs.hpp"
#include "numeric.hpp"

namespace atsd {

// Thrown when a design has more draw paths than the oracle will walk.
class EnumerationTooLarge : public std::runtime_error {
public:
    EnumerationTooLarge(double estimate, double limit)
        : std::runtime_error("enumeration: about " + std::to_string(static_cast<long long>(estimate)) +
                             " draw paths exceed the limit of " + std::to_string(static_cast<long long>(limit))),
          estimate_(estimate) {}
    double estimate() const noexcept { return estimate_; }

private:
    double estimate_;
};

inline constexpr double kEnumerationLimit = 1.0e7;

// Exact distribution of a scalar statistic: one (value, probability) per path.
struct Distribution {
    std::vector<double> value;
    std::vector<double> prob;

    void add(double v, double p) {
        value.push_back(v);
        prob.push_back(p);
    }
    double total_probability() const {
        CompensatedSum s;
        for (double p : prob) s.add(p);
        return s.value();
    }
    double mean() const {
        CompensatedSum s;
        for (std::size_t i = 0; i < value.size(); ++i) s.add(prob[i] * value[i]);
        return s.value();
    }
    double variance() const {
        const double mu = mean();
        CompensatedSum s;
        for (std::size_t i = 0; i < value.size(); ++i) s.add(prob[i] * (value[i] - mu) * (value[i] - mu));
        return s.value();
    }
};

// Every within-PSU sequential path on a fixed frame with its conditional
// probability.
inline std::vector<std::pair<PsuAdaptiveSample, double>> enumerate_sequential(const std::vector<Unit>& frame,
                                                                              int n_init, int d,
                                                                              const Condition& condition,
                                                                              double limit = kEnumerationLimit) {
    const int nf = static_cast<int>(frame.size());
    if (n_init < 1 || n_init > nf) throw std::invalid_argument("enumerate_sequential: bad initial size");
    std::vector<std::pair<PsuAdaptiveSample, double>> out;
    const double p_init = 1.0 / binomial(nf, n_init);
    for_each_combination(nf, n_init, [&](const std::vector<std::size_t>& init) {
        std::vector<char> used(frame.size(), 0);
        int l1 = 0;
        for (std::size_t i : init) {
            used[i] = 1;
            l1 += condition.satisfied(frame[i]) ? 1 : 0;
        }
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < frame.size(); ++i)
            if (!used[i]) rest.push_back(i);
        const int k = std::min(d * l1, static_cast<int>(rest.size()));
        const double p = p_init / binomial(static_cast<int>(rest.size()), k);
        for_each_combination(static_cast<int>(rest.size()), k, [&](const std::vector<std::size_t>& pick) {
            std::vector<std::size_t> added;
            for (std::size_t i : pick) added.push_back(rest[i]);
            out.emplace_back(make_adaptive_sample(frame, init, std::move(added), d, condition), p);
            if (static_cast<double>(out.size()) > limit) throw EnumerationTooLarge(static_cast<double>(out.size()), limit);
        });
    });
    return out;
}

namespace detail {

// Walks the cartesian product of per-slot alternatives.
template <class Slot, class Fn>
void product_walk(const std::vector<const std::vector<std::pair<Slot, double>>*>& lists, std::vector<Slot>& current,
                  std::size_t depth, double prob, Fn& fn) {
    if (depth == lists.size()) {
        fn(current, prob);
        return;
    }
    for (const auto& [slot, p] : *lists[depth]) {
        current.push_back(slot);
        product_walk(lists, current, depth + 1, prob * p, fn);
        current.pop_back();
    }
}

// Enumerates unordered first-stage selections; every estimator in this
// library is symmetric in slot order.
template <class Slot, class Fn>
double first_stage_walk(int M, int m, const std::vector<std::vector<std::pair<Slot, double>>>& per_psu, double limit,
                        Fn&& fn) {
    double paths = 0.0;
    for_each_combination(M, m, [&](const std::vector<std::size_t>& sel) {
        double n = 1.0;
        for (std::size_t h : sel) n *= static_cast<double>(per_psu[h].size());
        paths += n;
    });
    if (paths > limit) throw EnumerationTooLarge(paths, limit);
    const double p_stage = 1.0 / binomial(M, m);
    for_each_combination(M, m, [&](const std::vector<std::size_t>& sel) {
        std::vector<const std::vector<std::pair<Slot, double>>*> lists;
        for (std::size_t h : sel) lists.push_back(&per_psu[h]);
        std::vector<Slot> current;
        product_walk(lists, current, 0, p_stage, fn);
    });
    return paths;
}

}  // namespace detail

// Calls fn(draw, probability) for every ATSD path; returns the path count.
inline double enumerate_atsd(const Population& pop, const AtsdParams& params,
                             const std::function<void(const AtsdSample&, double)>& fn,
                             double limit = kEnumerationLimit) {
    params.validate(pop);
    std::vector<std::vector<std::pair<PsuAdaptiveSample, double>>> per_psu(static_cast<std::size_t>(pop.psu_count()));
    for (int h = 0; h < pop.psu_count(); ++h) {
        const int Nh = pop.psu_size(h);
        const int n1 = params.n1h[static_cast<std::size_t>(h)];
        const double p1 = 1.0 / binomial(Nh, n1);
        auto& list = per_psu[static_cast<std::size_t>(h)];
        for_each_combination(Nh, n1, [&](const std::vector<std::size_t>& idx) {
            std::vector<Unit> frame;
            for (std::size_t j : idx) frame.push_back(pop.psu(h)[j]);
            for (auto& [s, p] : enumerate_sequential(frame, params.n2h1, params.d, params.condition, limit)) {
                s.psu = h;
                s.psu_size = Nh;
                list.emplace_back(std::move(s), p * p1);
                if (static_cast<double>(list.size()) > limit) throw EnumerationTooLarge(static_cast<double>(list.size()), limit);
            }
        });
    }
    AtsdSample draw;
    draw.M = pop.psu_count();
    draw.N = pop.size();
    auto visit = [&](const std::vector<PsuAdaptiveSample>& slots, double p) {
        draw.psus = slots;
        fn(draw, p);
    };
    return detail::first_stage_walk(pop.psu_count(), params.m, per_psu, limit, visit);
}

// ATS: the sequential stage runs on the whole PSU with condition y > 0.
inline double enumerate_ats(const Population& pop, int m, int n1, int d1,
                            const std::function<void(const AtsdSample&, double)>& fn,
                            double limit = kEnumerationLimit) {
    AtsdParams p;
    p.m = m;
    p.n1h = pop.psu_sizes();
    p.n2h1 = n1;
    p.d = d1;
    p.condition = Condition{Variable::y, false, 0.0};
    return enumerate_atsd(pop, p, fn, limit);
}

inline double enumerate_two_stage(const Population& pop, int m, int n,
                                  const std::function<void(const TwoStageSample&, double)>& fn,
                                  double limit = kEnumerationLimit) {
    if (m < 1 || m > pop.psu_count()) throw std::invalid_argument("enumerate_two_stage: bad m");
    std::vector<std::vector<std::pair<TwoStageSample::Slot, double>>> per_psu(
        static_cast<std::size_t>(pop.psu_count()));
    for (int h = 0; h < pop.psu_count(); ++h) {
        const int Nh = pop.psu_size(h);
        if (n < 1 || n > Nh) throw std::invalid_argument("enumerate_two_stage: bad n");
        const double p = 1.0 / binomial(Nh, n);
        for_each_combination(Nh, n, [&](const std::vector<std::size_t>& idx) {
            TwoStageSample::Slot s;
            s.psu = h;
            s.psu_size = Nh;
            for (std::size_t j : idx) s.units.push_back(pop.psu(h)[j]);
            per_psu[static_cast<std::size_t>(h)].emplace_back(std::move(s), p);
        });
    }
    TwoStageSample draw;
    draw.M = pop.psu_count();
    draw.N = pop.size();
    auto visit = [&](const std::vector<TwoStageSample::Slot>& slots, double p) {
        draw.slots = slots;
        fn(draw, p);
    };
    return detail::first_stage_walk(pop.psu_count(), m, per_psu, limit, visit);
}

inline double enumerate_two_stage_double(const Population& pop, int m, int n1, int n2,
                                         const std::function<void(const TwoPhaseSample&, double)>& fn,
                                         double limit = kEnumerationLimit) {
    if (m < 1 || m > pop.psu_count()) throw std::invalid_argument("enumerate_two_stage_double: bad m");
    std::vector<std::vector<std::pair<TwoPhaseSample::Slot, double>>> per_psu(
        static_cast<std::size_t>(pop.psu_count()));
    for (int h = 0; h < pop.psu_count(); ++h) {
        const int Nh = pop.psu_size(h);
        if (n1 < 1 || n1 > Nh || n2 < 1 || n2 > n1) throw std::invalid_argument("enumerate_two_stage_double: bad sizes");
        const double p = 1.0 / (binomial(Nh, n1) * binomial(n1, n2));
        for_each_combination(Nh, n1, [&](const std::vector<std::size_t>& idx) {
            for_each_combination(n1, n2, [&](const std::vector<std::size_t>& sub) {
                TwoPhaseSample::Slot s;
                s.psu = h;
                s.psu_size = Nh;
                for (std::size_t j : idx) s.phase1.push_back(pop.psu(h)[j]);
                s.phase2 = sub;
                per_psu[static_cast<std::size_t>(h)].emplace_back(std::move(s), p);
            });
        });
    }
    TwoPhaseSample draw;
    draw.M = pop.psu_count();
    draw.N = pop.size();
    auto visit = [&](const std::vector<TwoPhaseSample::Slot>& slots, double p) {
        draw.slots = slots;
        fn(draw, p);
    };
    return detail::first_stage_walk(pop.psu_count(), m, per_psu, limit, visit);
}

inline double enumerate_srswor(const Population& pop, int n, const std::function<void(const SrsSample&, double)>& fn,
                               double limit = kEnumerationLimit) {
    if (n < 1 || n > pop.size()) throw std::invalid_argument("enumerate_srswor: bad n");
    const double paths = binomial(pop.size(), n);
    if (paths > limit) throw EnumerationTooLarge(paths, limit);
    std::vector<const Unit*> flat;
    for (int h = 0; h < pop.psu_count(); ++h)
        for (const Unit& u : pop.psu(h)) flat.push_back(&u);
    SrsSample draw;
    draw.N = pop.size();
    for_each_combination(pop.size(), n, [&](const std::vector<std::size_t>& idx) {
        draw.units.clear();
        for (std::size_t i : idx) draw.units.push_back(*flat[i]);
        fn(draw, 1.0 / paths);
    });
    return paths;
}

// Exact distribution of stat(draw) under an enumerator.
template <class Draw, class Enumerator, class Stat>
Distribution exact_distribution(Enumerator&& enumerate, Stat&& stat) {
    Distribution d;
    enumerate([&](const Draw& draw, double p) { d.add(stat(draw), p); });
    return d;
}

}  // namespace atsd
