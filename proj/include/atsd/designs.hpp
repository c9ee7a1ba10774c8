#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "population.hpp"
#include "rng.hpp"

namespace atsd {

// Within-PSU sequential sample: an SRSWOR initial sample from `frame`, then
// d additional SRSWOR draws per condition-satisfier found initially, taken
// from the rest of the frame and capped at its exhaustion.
struct PsuAdaptiveSample {
    int psu = 0;        // 0-based PSU position in the population
    int psu_size = 0;   // N_h
    std::vector<Unit> frame;           // s_1h for ATSD, the whole PSU for ATS
    std::vector<std::size_t> initial;  // positions into frame
    std::vector<std::size_t> added;    // positions into frame
    Condition condition;
    int d = 0;
    int l_initial = 0;
    int l_total = 0;
    bool capped = false;

    int frame_size() const noexcept { return static_cast<int>(frame.size()); }
    int n_initial() const noexcept { return static_cast<int>(initial.size()); }
    int n_final() const noexcept { return static_cast<int>(initial.size() + added.size()); }
    double p_initial() const noexcept {
        return initial.empty() ? 0.0 : static_cast<double>(l_initial) / static_cast<double>(initial.size());
    }
    // a_h = N_h / n_1h
    double expansion() const noexcept { return static_cast<double>(psu_size) / static_cast<double>(frame.size()); }

    template <class Fn>
    void for_each_final(Fn&& fn) const {
        for (std::size_t i : initial) fn(frame[i]);
        for (std::size_t i : added) fn(frame[i]);
    }
};

// Builds a PsuAdaptiveSample from explicit initial and added positions.
// Shared by the random design and the enumeration oracle.
inline PsuAdaptiveSample make_adaptive_sample(std::vector<Unit> frame, std::vector<std::size_t> initial,
                                              std::vector<std::size_t> added, int d, Condition condition) {
    PsuAdaptiveSample s;
    s.frame = std::move(frame);
    s.initial = std::move(initial);
    s.added = std::move(added);
    s.d = d;
    s.condition = condition;
    for (std::size_t i : s.initial) s.l_initial += condition.satisfied(s.frame[i]) ? 1 : 0;
    s.l_total = s.l_initial;
    for (std::size_t i : s.added) s.l_total += condition.satisfied(s.frame[i]) ? 1 : 0;
    const int wanted = d * s.l_initial;
    s.capped = wanted > s.frame_size() - s.n_initial();
    return s;
}

inline PsuAdaptiveSample sequential_expand(std::vector<Unit> frame, int n_init, int d, Condition condition,
                                           DrawRng& rng) {
    if (frame.empty()) throw std::invalid_argument("sequential_expand: empty frame");
    if (n_init < 1 || n_init > static_cast<int>(frame.size()))
        throw std::invalid_argument("sequential_expand: initial size must lie in [1, frame size]");
    if (d < 0) throw std::invalid_argument("sequential_expand: d must be >= 0");

    const int frame_size = static_cast<int>(frame.size());
    std::vector<std::size_t> order = srswor(frame_size, frame_size, rng);
    // order is a uniform permutation; its first n_init entries are the
    // initial SRSWOR and the next entries an SRSWOR from the remainder.
    int l_initial = 0;
    for (int i = 0; i < n_init; ++i) l_initial += condition.satisfied(frame[order[static_cast<std::size_t>(i)]]) ? 1 : 0;
    const int extra = std::min(d * l_initial, frame_size - n_init);
    std::vector<std::size_t> initial(order.begin(), order.begin() + n_init);
    std::vector<std::size_t> added(order.begin() + n_init, order.begin() + n_init + extra);
    return make_adaptive_sample(std::move(frame), std::move(initial), std::move(added), d, condition);
}

// ---------------------------------------------------------------------------
// ATSD / ATS
// ---------------------------------------------------------------------------

struct AtsdParams {
    int m = 1;
    std::vector<int> n1h;  // phase-1 size per PSU position (size M)
    int n2h1 = 1;          // initial phase-2 size
    int d = 0;
    Condition condition;

    static AtsdParams equal(int M, int m, int n1h, int n2h1, int d, Condition condition) {
        AtsdParams p;
        p.m = m;
        p.n1h.assign(static_cast<std::size_t>(M), n1h);
        p.n2h1 = n2h1;
        p.d = d;
        p.condition = condition;
        return p;
    }

    void validate(const Population& pop) const {
        if (m < 1 || m > pop.psu_count()) throw std::invalid_argument("ATSD: m must lie in [1, M]");
        if (static_cast<int>(n1h.size()) != pop.psu_count())
            throw std::invalid_argument("ATSD: need one phase-1 size per PSU");
        if (d < 0) throw std::invalid_argument("ATSD: d must be >= 0");
        for (int h = 0; h < pop.psu_count(); ++h) {
            const int n1 = n1h[static_cast<std::size_t>(h)];
            if (n1 < 1 || n1 > pop.psu_size(h)) throw std::invalid_argument("ATSD: n_1h must lie in [1, N_h]");
            if (n2h1 < 1 || n2h1 > n1) throw std::invalid_argument("ATSD: n_2h1 must lie in [1, n_1h]");
        }
    }
};

// One ATSD (or ATS) draw. Slots are in first-stage selection order.
struct AtsdSample {
    int M = 0;
    int N = 0;
    std::vector<PsuAdaptiveSample> psus;

    int m() const noexcept { return static_cast<int>(psus.size()); }
    double pi() const noexcept { return static_cast<double>(m()) / static_cast<double>(M); }

    // Auxiliary measurements: the whole phase-1 sample.
    int n_aux() const noexcept {
        int n = 0;
        for (const auto& s : psus) n += s.frame_size();
        return n;
    }
    // Target measurements: the final phase-2 sample.
    int n_y() const noexcept {
        int n = 0;
        for (const auto& s : psus) n += s.n_final();
        return n;
    }
    bool any_capped() const noexcept {
        return std::any_of(psus.begin(), psus.end(), [](const auto& s) { return s.capped; });
    }
};

inline AtsdSample run_atsd(const Population& pop, const AtsdParams& params, DrawRng& rng) {
    params.validate(pop);
    AtsdSample out;
    out.M = pop.psu_count();
    out.N = pop.size();
    const auto selected = srswor(pop.psu_count(), params.m, rng);
    for (std::size_t h : selected) {
        const int hi = static_cast<int>(h);
        const auto& units = pop.psu(hi);
        const auto phase1 = srswor(pop.psu_size(hi), params.n1h[h], rng);
        std::vector<Unit> frame;
        frame.reserve(phase1.size());
        for (std::size_t j : phase1) frame.push_back(units[j]);
        PsuAdaptiveSample s = sequential_expand(std::move(frame), params.n2h1, params.d, params.condition, rng);
        s.psu = hi;
        s.psu_size = pop.psu_size(hi);
        out.psus.push_back(std::move(s));
    }
    return out;
}

// ATS: sequential sampling over whole PSUs with condition y > 0. `n1_slots`
// holds the initial size for each first-stage slot (all equal in the usual
// plan). Represented as an ATSD draw whose phase 1 is a census.
inline AtsdSample run_ats(const Population& pop, int m, const std::vector<int>& n1_slots, int d1, DrawRng& rng) {
    if (m < 1 || m > pop.psu_count()) throw std::invalid_argument("ATS: m must lie in [1, M]");
    if (static_cast<int>(n1_slots.size()) != m) throw std::invalid_argument("ATS: need one initial size per slot");
    if (d1 < 0) throw std::invalid_argument("ATS: d1 must be >= 0");
    const Condition on_y{Variable::y, false, 0.0};
    AtsdSample out;
    out.M = pop.psu_count();
    out.N = pop.size();
    const auto selected = srswor(pop.psu_count(), m, rng);
    for (std::size_t slot = 0; slot < selected.size(); ++slot) {
        const int h = static_cast<int>(selected[slot]);
        const int n1 = n1_slots[slot];
        if (n1 < 1 || n1 > pop.psu_size(h)) throw std::invalid_argument("ATS: n1 must lie in [1, N_h]");
        PsuAdaptiveSample s = sequential_expand(pop.psu(h), n1, d1, on_y, rng);
        s.psu = h;
        s.psu_size = pop.psu_size(h);
        out.psus.push_back(std::move(s));
    }
    return out;
}

inline AtsdSample run_ats(const Population& pop, int m, int n1, int d1, DrawRng& rng) {
    return run_ats(pop, m, std::vector<int>(static_cast<std::size_t>(std::max(m, 0)), n1), d1, rng);
}

// ---------------------------------------------------------------------------
// Conventional designs
// ---------------------------------------------------------------------------

struct TwoStageSample {
    struct Slot {
        int psu = 0;
        int psu_size = 0;
        std::vector<Unit> units;
    };
    int M = 0;
    int N = 0;
    std::vector<Slot> slots;

    int m() const noexcept { return static_cast<int>(slots.size()); }
    int n_y() const noexcept {
        int n = 0;
        for (const auto& s : slots) n += static_cast<int>(s.units.size());
        return n;
    }
};

// Two-stage SRSWOR; `n_slots[k]` units are taken in the k-th selected PSU.
inline TwoStageSample run_two_stage(const Population& pop, int m, const std::vector<int>& n_slots, DrawRng& rng) {
    if (m < 1 || m > pop.psu_count()) throw std::invalid_argument("two-stage: m must lie in [1, M]");
    if (static_cast<int>(n_slots.size()) != m) throw std::invalid_argument("two-stage: need one size per slot");
    TwoStageSample out;
    out.M = pop.psu_count();
    out.N = pop.size();
    const auto selected = srswor(pop.psu_count(), m, rng);
    for (std::size_t slot = 0; slot < selected.size(); ++slot) {
        const int h = static_cast<int>(selected[slot]);
        const int n = n_slots[slot];
        if (n < 1 || n > pop.psu_size(h)) throw std::invalid_argument("two-stage: n must lie in [1, N_h]");
        TwoStageSample::Slot s;
        s.psu = h;
        s.psu_size = pop.psu_size(h);
        for (std::size_t j : srswor(pop.psu_size(h), n, rng)) s.units.push_back(pop.psu(h)[j]);
        out.slots.push_back(std::move(s));
    }
    return out;
}

inline TwoStageSample run_two_stage(const Population& pop, int m, int n, DrawRng& rng) {
    return run_two_stage(pop, m, std::vector<int>(static_cast<std::size_t>(std::max(m, 0)), n), rng);
}

// Two-stage double sampling: phase 1 measures the auxiliary on an SRSWOR of
// n_1h units per selected PSU, phase 2 measures y on an SRSWOR subsample.
struct TwoPhaseSample {
    struct Slot {
        int psu = 0;
        int psu_size = 0;
        std::vector<Unit> phase1;
        std::vector<std::size_t> phase2;  // positions into phase1
    };
    int M = 0;
    int N = 0;
    std::vector<Slot> slots;

    int m() const noexcept { return static_cast<int>(slots.size()); }
    int n_aux() const noexcept {
        int n = 0;
        for (const auto& s : slots) n += static_cast<int>(s.phase1.size());
        return n;
    }
    int n_y() const noexcept {
        int n = 0;
        for (const auto& s : slots) n += static_cast<int>(s.phase2.size());
        return n;
    }
};

inline TwoPhaseSample run_two_stage_double(const Population& pop, int m, const std::vector<int>& n1h,
                                           const std::vector<int>& n_ytr_slots, DrawRng& rng) {
    if (m < 1 || m > pop.psu_count()) throw std::invalid_argument("two-stage double: m must lie in [1, M]");
    if (static_cast<int>(n1h.size()) != pop.psu_count())
        throw std::invalid_argument("two-stage double: need one phase-1 size per PSU");
    if (static_cast<int>(n_ytr_slots.size()) != m)
        throw std::invalid_argument("two-stage double: need one phase-2 size per slot");
    TwoPhaseSample out;
    out.M = pop.psu_count();
    out.N = pop.size();
    const auto selected = srswor(pop.psu_count(), m, rng);
    for (std::size_t slot = 0; slot < selected.size(); ++slot) {
        const int h = static_cast<int>(selected[slot]);
        const int n1 = n1h[static_cast<std::size_t>(h)];
        const int n2 = n_ytr_slots[slot];
        if (n1 < 1 || n1 > pop.psu_size(h)) throw std::invalid_argument("two-stage double: n_1h out of range");
        if (n2 < 1 || n2 > n1) throw std::invalid_argument("two-stage double: n_ytR must lie in [1, n_1h]");
        TwoPhaseSample::Slot s;
        s.psu = h;
        s.psu_size = pop.psu_size(h);
        for (std::size_t j : srswor(pop.psu_size(h), n1, rng)) s.phase1.push_back(pop.psu(h)[j]);
        s.phase2 = srswor(n1, n2, rng);
        out.slots.push_back(std::move(s));
    }
    return out;
}

inline TwoPhaseSample run_two_stage_double(const Population& pop, int m, int n1h, int n_ytr, DrawRng& rng) {
    return run_two_stage_double(pop, m, std::vector<int>(static_cast<std::size_t>(pop.psu_count()), n1h),
                                std::vector<int>(static_cast<std::size_t>(std::max(m, 0)), n_ytr), rng);
}

struct SrsSample {
    int N = 0;
    std::vector<Unit> units;
    int n_y() const noexcept { return static_cast<int>(units.size()); }
};

inline SrsSample run_srswor_design(const Population& pop, int n, DrawRng& rng) {
    if (n < 1 || n > pop.size()) throw std::invalid_argument("SRSWOR: n must lie in [1, N]");
    SrsSample out;
    out.N = pop.size();
    std::vector<const Unit*> flat;
    flat.reserve(static_cast<std::size_t>(pop.size()));
    for (int h = 0; h < pop.psu_count(); ++h)
        for (const Unit& u : pop.psu(h)) flat.push_back(&u);
    for (std::size_t i : srswor(pop.size(), n, rng)) out.units.push_back(*flat[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Debug dump: section-tagged, line-oriented like population files.
// ---------------------------------------------------------------------------

inline std::string dump_draw(const AtsdSample& draw) {
    std::string out = "[atsd]\nM=" + std::to_string(draw.M) + "\nN=" + std::to_string(draw.N) +
                      "\nm=" + std::to_string(draw.m()) + "\n";
    for (const auto& s : draw.psus) {
        out += "[psu]\nh=" + std::to_string(s.psu + 1) + "\nNh=" + std::to_string(s.psu_size) +
               "\nn1h=" + std::to_string(s.frame_size()) + "\nn2h1=" + std::to_string(s.n_initial()) +
               "\nd=" + std::to_string(s.d) + "\ncondition=" + s.condition.name() +
               "\nl2h1=" + std::to_string(s.l_initial) + "\nl2h=" + std::to_string(s.l_total) +
               "\ncapped=" + (s.capped ? "1" : "0") + "\n";
        std::vector<char> role(s.frame.size(), 'f');
        for (std::size_t i : s.initial) role[i] = 'i';
        for (std::size_t i : s.added) role[i] = 'a';
        for (std::size_t i = 0; i < s.frame.size(); ++i)
            out += std::to_string(s.frame[i].ssu) + "," + role[i] + "\n";
    }
    return out;
}

}  // namespace atsd
