#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <vector>

#include "designs.hpp"
#include "numeric.hpp"

namespace atsd {

// Moments of two unit functions over the condition group c (satisfiers) and
// its complement c' within the final sequential sample.
struct GroupMoments {
    PairMoments c;
    PairMoments c_prime;
};

template <class F, class G>
GroupMoments group_moments(const PsuAdaptiveSample& s, F&& f, G&& g) {
    std::vector<double> fa, ga, fb, gb;
    s.for_each_final([&](const Unit& u) {
        if (s.condition.satisfied(u)) {
            fa.push_back(f(u));
            ga.push_back(g(u));
        } else {
            fb.push_back(f(u));
            gb.push_back(g(u));
        }
    });
    return {pair_moments(fa, ga), pair_moments(fb, gb)};
}

inline auto value_of(Variable v) {
    return [v](const Unit& u) { return u.value(v); };
}

// Murthy estimator of the frame total of f:
//   n_1h [ p v̄_c + (1 - p) v̄_c' ],  p = l_2h1 / n_2h1,
// with an empty group contributing nothing.
template <class F>
double murthy_total(const PsuAdaptiveSample& s, F&& f) {
    if (s.initial.empty()) throw std::invalid_argument("murthy_total: empty initial sample");
    double sum_c = 0.0, sum_cp = 0.0;
    int count_c = 0, count_cp = 0;
    s.for_each_final([&](const Unit& u) {
        if (s.condition.satisfied(u)) {
            sum_c += f(u);
            ++count_c;
        } else {
            sum_cp += f(u);
            ++count_cp;
        }
    });
    const double p = s.p_initial();
    const double mean_c = count_c ? sum_c / count_c : 0.0;
    const double mean_cp = count_cp ? sum_cp / count_cp : 0.0;
    return static_cast<double>(s.frame_size()) * (p * mean_c + (1.0 - p) * mean_cp);
}

inline double murthy_total(const PsuAdaptiveSample& s, Variable v) { return murthy_total(s, value_of(v)); }

// Sample-based estimator of the conditional (co)variance of the Murthy
// totals of f and g. With f == g this is V̂3; otherwise Ĉ3. Empty groups
// contribute zero. Undefined (nullopt) when n_2h1 < 2.
template <class F, class G>
std::optional<double> v3_form(const PsuAdaptiveSample& s, F&& f, G&& g) {
    const int n0 = s.n_initial();
    if (n0 < 2) return std::nullopt;
    const double n1 = s.frame_size();
    const double p = s.p_initial();
    const double l1 = s.l_initial;
    const double l = s.l_total;
    const double n = s.n_final();
    const double fpc = (n1 - n0) / (n0 - 1.0);

    const GroupMoments gm = group_moments(s, f, g);

    double term_c = 0.0;
    if (l > 0) {
        const double coef = (n1 - 1.0) * (l1 - 1.0) / (n0 - 1.0) + (l - 1.0) / l * ((1.0 - p) * fpc - n1 * p);
        term_c = p * coef * gm.c.cov;
    }
    const double term_gap =
        p * (1.0 - p) * fpc * (gm.c.mean_a - gm.c_prime.mean_a) * (gm.c.mean_b - gm.c_prime.mean_b);
    double term_cp = 0.0;
    if (n - l > 0) {
        const double coef = (n1 - 1.0) * (n0 - l1 - 1.0) / (n0 - 1.0) + (n - l - 1.0) / (n - l) * (p * fpc - n1 * (1.0 - p));
        term_cp = (1.0 - p) * coef * gm.c_prime.cov;
    }
    return n1 * (term_c + term_gap + term_cp);
}

inline std::optional<double> v3_hat(const PsuAdaptiveSample& s, Variable v) {
    return v3_form(s, value_of(v), value_of(v));
}

inline std::optional<double> c3_hat(const PsuAdaptiveSample& s, Variable a = Variable::y, Variable b = Variable::x) {
    return v3_form(s, value_of(a), value_of(b));
}

// Per-PSU Murthy quantities for target y and an auxiliary variable.
struct MurthyPsuEstimates {
    double t_hat_y = 0.0;
    double t_hat_x = 0.0;
    double t_hat_x2 = 0.0;
    double t_hat_y2 = 0.0;
    double t_hat_xy = 0.0;
    std::optional<double> v3_hat_y;
    std::optional<double> v3_hat_x;
    std::optional<double> c3_hat_xy;
    double p_2h1 = 0.0;
    GroupMoments groups;  // (x, y) within c and c'
};

inline MurthyPsuEstimates murthy_psu(const PsuAdaptiveSample& s, Variable aux = Variable::x) {
    MurthyPsuEstimates e;
    auto y = value_of(Variable::y);
    auto x = value_of(aux);
    e.t_hat_y = murthy_total(s, y);
    e.t_hat_x = murthy_total(s, x);
    e.t_hat_x2 = murthy_total(s, [&](const Unit& u) { return x(u) * x(u); });
    e.t_hat_y2 = murthy_total(s, [&](const Unit& u) { return u.y * u.y; });
    e.t_hat_xy = murthy_total(s, [&](const Unit& u) { return x(u) * u.y; });
    e.v3_hat_y = v3_form(s, y, y);
    e.v3_hat_x = v3_form(s, x, x);
    e.c3_hat_xy = v3_form(s, y, x);
    e.p_2h1 = s.p_initial();
    e.groups = group_moments(s, x, y);
    return e;
}

// Design weights of the exact conditional (co)variance of Murthy totals for
// a frame holding L satisfiers among nf units. Conditioning on (l_2h1, l_2h)
// the condition groups of the final sample are SRSWORs of the frame's
// groups, so for unit functions f and g
//   C3 = n1^2 { Δf Δg var_p + S_fg,A e_a + S_fg,B e_b }
// with e_a = E[p^2 (1/l - 1/L)], e_b = E[(1-p)^2 (1/(n-l) - 1/(nf-L))],
// A/B the satisfier/non-satisfier parts of the frame and Δ the gap of their
// means.
struct SequentialWeights {
    double var_p = 0.0;
    double e_a = 0.0;
    double e_b = 0.0;
};

inline SequentialWeights sequential_weights(int L, int nf, int n_init, int d, const LogFactorials& lf) {
    if (n_init < 1 || n_init > nf) throw std::invalid_argument("sequential_weights: bad initial size");
    if (L < 0 || L > nf || lf.max_n() < nf) throw std::invalid_argument("sequential_weights: bad frame counts");
    SequentialWeights w;
    const int B = nf - L;
    const int rest = nf - n_init;
    for (int a = 0; a <= n_init; ++a) {
        const double pa = lf.hypergeometric(a, n_init, L, nf);
        if (pa == 0.0) continue;
        const double p = static_cast<double>(a) / n_init;
        const int k = std::min(d * a, rest);
        for (int b = 0; b <= k; ++b) {
            const double pb = lf.hypergeometric(b, k, L - a, rest);
            if (pb == 0.0) continue;
            const int l = a + b;
            const int nb = n_init + k - l;
            if (l > 0) w.e_a += pa * pb * p * p * (1.0 / l - 1.0 / L);
            if (nb > 0) w.e_b += pa * pb * (1.0 - p) * (1.0 - p) * (1.0 / nb - 1.0 / B);
        }
    }
    // Hypergeometric variance of the initial satisfier proportion.
    const double big_p = static_cast<double>(L) / nf;
    w.var_p = nf > 1 ? big_p * (1.0 - big_p) * (nf - n_init) / ((nf - 1.0) * static_cast<double>(n_init)) : 0.0;
    return w;
}

// Frame split by the condition, with moments of (f, g) in each part.
struct FrameGroups {
    int L = 0;
    int size = 0;
    PairMoments a;  // satisfiers
    PairMoments b;  // non-satisfiers
};

template <class F, class G>
FrameGroups frame_groups(const std::vector<Unit>& frame, const Condition& condition, F&& f, G&& g) {
    std::vector<double> fa, ga, fb, gb;
    for (const Unit& u : frame) {
        if (condition.satisfied(u)) {
            fa.push_back(f(u));
            ga.push_back(g(u));
        } else {
            fb.push_back(f(u));
            gb.push_back(g(u));
        }
    }
    return {static_cast<int>(fa.size()), static_cast<int>(frame.size()), pair_moments(fa, ga), pair_moments(fb, gb)};
}

inline double combine_c3(const FrameGroups& fg, const SequentialWeights& w) {
    const bool both = fg.L > 0 && fg.L < fg.size;
    const double gap_f = both ? fg.a.mean_a - fg.b.mean_a : 0.0;
    const double gap_g = both ? fg.a.mean_b - fg.b.mean_b : 0.0;
    const double n1 = fg.size;
    return n1 * n1 * (gap_f * gap_g * w.var_p + fg.a.cov * w.e_a + fg.b.cov * w.e_b);
}

// Exact conditional (co)variance of the Murthy totals of f and g given the
// frame.
template <class F, class G>
double conditional_c3(const std::vector<Unit>& frame, int n_init, int d, const Condition& condition, F&& f, G&& g,
                      const LogFactorials* lf_in = nullptr) {
    const int nf = static_cast<int>(frame.size());
    if (n_init < 1 || n_init > nf) throw std::invalid_argument("conditional_c3: bad initial size");
    std::optional<LogFactorials> own;
    if (!lf_in || lf_in->max_n() < nf) own.emplace(nf);
    const LogFactorials& lf = lf_in && lf_in->max_n() >= nf ? *lf_in : *own;
    const FrameGroups fg = frame_groups(frame, condition, f, g);
    return combine_c3(fg, sequential_weights(fg.L, nf, n_init, d, lf));
}

}  // namespace atsd
