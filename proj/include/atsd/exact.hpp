#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "designs.hpp"
#include "murthy.hpp"
#include "numeric.hpp"
#include "population.hpp"

namespace atsd {

// Conventional finite-population slope
//   β1 = (Σ y x - N X̄ Ȳ) / (Σ x² - N X̄²).
inline double beta_pop(const Population& pop, Variable aux = Variable::x) {
    std::vector<double> xs, ys;
    for (int h = 0; h < pop.psu_count(); ++h)
        for (const Unit& u : pop.psu(h)) {
            xs.push_back(u.value(aux));
            ys.push_back(u.y);
        }
    const PairMoments xy = pair_moments(xs, ys);
    const double sxx = pair_moments(xs, xs).cov;
    double ms = 0.0;
    for (double v : xs) ms += v * v;
    ms /= static_cast<double>(xs.size());
    if (!(sxx > 1e-12 * ms) || xs.size() < 2)
        throw std::invalid_argument("beta_pop: auxiliary variable has zero variance");
    return xy.cov / sxx;
}

// Controls how expectations over the phase-1 sample s_1h are taken.
struct ExactOptions {
    double enumeration_limit = 2.0e5;  // max C(N_h, n_1h) enumerated per PSU
    int monte_carlo_draws = 10000;     // s_1h draws per PSU otherwise
    std::uint64_t seed = 0x51ab1e5eedULL;
};

// Per PSU: E over s_1h of the exact conditional V3(t̂_y), V3(t̂_x) and
// C3(t̂_y, t̂_x), with Monte Carlo standard errors (0 when enumerated).
struct PhaseThreeMoments {
    std::vector<double> v3y, v3x, c3;
    std::vector<double> se_v3y, se_v3x, se_c3;
    // Per PSU covariance of the Monte Carlo estimates, needed for the SE of
    // linear combinations: [yy,x] [yy,c] [x,c].
    std::vector<double> cov_yx, cov_yc, cov_xc;
    bool exact = true;
};

namespace detail {

struct C3Triple {
    double v3y, v3x, c3;
};

inline C3Triple conditional_triple(const std::vector<Unit>& frame, int n_init, int d, const Condition& cond,
                                   Variable aux, const LogFactorials& lf) {
    auto y = value_of(Variable::y);
    auto x = value_of(aux);
    int L = 0;
    for (const Unit& u : frame) L += cond.satisfied(u) ? 1 : 0;
    const SequentialWeights w = sequential_weights(L, static_cast<int>(frame.size()), n_init, d, lf);
    return {combine_c3(frame_groups(frame, cond, y, y), w), combine_c3(frame_groups(frame, cond, x, x), w),
            combine_c3(frame_groups(frame, cond, y, x), w)};
}

}  // namespace detail

inline PhaseThreeMoments phase_three_moments(const Population& pop, const AtsdParams& params,
                                             Variable aux = Variable::x, const ExactOptions& opt = {}) {
    params.validate(pop);
    PhaseThreeMoments out;
    int max_n = 1;
    for (int h = 0; h < pop.psu_count(); ++h) max_n = std::max(max_n, pop.psu_size(h));
    const LogFactorials lf(max_n);
    for (int h = 0; h < pop.psu_count(); ++h) {
        const int Nh = pop.psu_size(h);
        const int n1 = params.n1h[static_cast<std::size_t>(h)];
        const auto& psu = pop.psu(h);
        std::vector<Unit> frame;
        if (binomial(Nh, n1) <= opt.enumeration_limit) {
            CompensatedSum sy, sx, sc;
            double count = 0.0;
            for_each_combination(Nh, n1, [&](const std::vector<std::size_t>& idx) {
                frame.clear();
                for (std::size_t j : idx) frame.push_back(psu[j]);
                const auto t = detail::conditional_triple(frame, params.n2h1, params.d, params.condition, aux, lf);
                sy.add(t.v3y);
                sx.add(t.v3x);
                sc.add(t.c3);
                count += 1.0;
            });
            out.v3y.push_back(sy.value() / count);
            out.v3x.push_back(sx.value() / count);
            out.c3.push_back(sc.value() / count);
            for (auto* v : {&out.se_v3y, &out.se_v3x, &out.se_c3, &out.cov_yx, &out.cov_yc, &out.cov_xc})
                v->push_back(0.0);
        } else {
            out.exact = false;
            if (opt.monte_carlo_draws < 2) throw std::invalid_argument("phase_three_moments: need >= 2 draws");
            DrawRng rng(opt.seed, static_cast<std::uint64_t>(h));
            std::vector<double> vy, vx, vc;
            for (int r = 0; r < opt.monte_carlo_draws; ++r) {
                frame.clear();
                for (std::size_t j : srswor(Nh, n1, rng)) frame.push_back(psu[j]);
                const auto t = detail::conditional_triple(frame, params.n2h1, params.d, params.condition, aux, lf);
                vy.push_back(t.v3y);
                vx.push_back(t.v3x);
                vc.push_back(t.c3);
            }
            const double R = opt.monte_carlo_draws;
            const PairMoments yy = pair_moments(vy, vy), xx = pair_moments(vx, vx), cc = pair_moments(vc, vc);
            out.v3y.push_back(yy.mean_a);
            out.v3x.push_back(xx.mean_a);
            out.c3.push_back(cc.mean_a);
            out.se_v3y.push_back(std::sqrt(yy.cov / R));
            out.se_v3x.push_back(std::sqrt(xx.cov / R));
            out.se_c3.push_back(std::sqrt(cc.cov / R));
            out.cov_yx.push_back(pair_moments(vy, vx).cov / R);
            out.cov_yc.push_back(pair_moments(vy, vc).cov / R);
            out.cov_xc.push_back(pair_moments(vx, vc).cov / R);
        }
    }
    return out;
}

// var(μ̂_reg) for fixed β split by sampling stage:
//   part1 = M² (1 - m/M) S²_ty / (m N²)
//   part2 = (M/m) Σ_h N_h² (1 - n_1h/N_h) S²_yh / (n_1h N²)
//   part3 = (M/m) Σ_h a_h² E2[V3(t̂_y) + β² V3(t̂_x) - 2β C3] / N²
struct DesignVariance {
    double part1 = 0.0;
    double part2 = 0.0;
    double part3 = 0.0;
    double part3_se = 0.0;
    bool exact = true;
    double total() const noexcept { return part1 + part2 + part3; }
};

namespace detail {

struct LinearTarget {
    // Unit function coefficients: u = cy·y + cx·x, v = dy·y + dx·x.
    double cy, cx, dy, dx;
};

// Stage decomposition of cov(Σ-expansion of u, Σ-expansion of v) where the
// estimator is ū_n2 + (phase-1 terms that cancel in expectation). With
// u = v = y - βx this is var(μ̂_reg); with u = v = x it is var(x̄_n2); with
// u = y, v = x it is cov(ȳ_n2, x̄_n2).
inline DesignVariance decompose(const Population& pop, const AtsdParams& params, Variable aux,
                                const PhaseThreeMoments& m3, double between_u_y, double between_u_x,
                                double between_v_y, double between_v_x, const LinearTarget& t) {
    const double M = pop.psu_count(), m = params.m, N = pop.size();
    DesignVariance dv;
    dv.exact = m3.exact;
    if (m < M) {
        std::vector<double> tu, tv;
        for (int h = 0; h < pop.psu_count(); ++h) {
            const double ty = pop.psu_total(h, Variable::y), tx = pop.psu_total(h, aux);
            tu.push_back(between_u_y * ty + between_u_x * tx);
            tv.push_back(between_v_y * ty + between_v_x * tx);
        }
        dv.part1 = M * M * (1.0 - m / M) * pair_moments(tu, tv).cov / (m * N * N);
    }
    CompensatedSum p2, p3;
    double var3 = 0.0;
    for (int h = 0; h < pop.psu_count(); ++h) {
        const double Nh = pop.psu_size(h), n1 = params.n1h[static_cast<std::size_t>(h)];
        if (n1 < Nh) {
            std::vector<double> u, v;
            for (const Unit& w : pop.psu(h)) {
                u.push_back(t.cy * w.y + t.cx * w.value(aux));
                v.push_back(t.dy * w.y + t.dx * w.value(aux));
            }
            p2.add(Nh * Nh * (1.0 - n1 / Nh) * pair_moments(u, v).cov / n1);
        }
        const std::size_t k = static_cast<std::size_t>(h);
        // Bilinear expansion of C3(u, v) in the (y, x) moments.
        const double c3 = t.cy * t.dy * m3.v3y[k] + t.cx * t.dx * m3.v3x[k] + (t.cy * t.dx + t.cx * t.dy) * m3.c3[k];
        const double a = Nh / n1;
        p3.add(a * a * c3);
        // Delta-method variance of the Monte Carlo estimate of c3.
        const double gy = t.cy * t.dy, gx = t.cx * t.dx, gc = t.cy * t.dx + t.cx * t.dy;
        const double v = gy * gy * m3.se_v3y[k] * m3.se_v3y[k] + gx * gx * m3.se_v3x[k] * m3.se_v3x[k] +
                         gc * gc * m3.se_c3[k] * m3.se_c3[k] + 2.0 * gy * gx * m3.cov_yx[k] +
                         2.0 * gy * gc * m3.cov_yc[k] + 2.0 * gx * gc * m3.cov_xc[k];
        var3 += a * a * a * a * std::max(v, 0.0);
    }
    dv.part2 = (M / m) * p2.value() / (N * N);
    dv.part3 = (M / m) * p3.value() / (N * N);
    dv.part3_se = (M / m) * std::sqrt(var3) / (N * N);
    return dv;
}

}  // namespace detail

inline DesignVariance var_mu_reg_exact(const Population& pop, const AtsdParams& params, double beta,
                                       const PhaseThreeMoments& m3, Variable aux = Variable::x) {
    params.validate(pop);
    // Stage 1 and 2 only see y: the β term has conditional mean zero given s_1h.
    DesignVariance dv = detail::decompose(pop, params, aux, m3, 1.0, 0.0, 1.0, 0.0, {1.0, 0.0, 1.0, 0.0});
    const DesignVariance d3 = detail::decompose(pop, params, aux, m3, 1.0, 0.0, 1.0, 0.0, {1.0, -beta, 1.0, -beta});
    dv.part3 = d3.part3;
    dv.part3_se = d3.part3_se;
    return dv;
}

inline DesignVariance var_mu_reg_exact(const Population& pop, const AtsdParams& params, double beta,
                                       Variable aux = Variable::x, const ExactOptions& opt = {}) {
    return var_mu_reg_exact(pop, params, beta, phase_three_moments(pop, params, aux, opt), aux);
}

inline DesignVariance var_xbar_n2_exact(const Population& pop, const AtsdParams& params,
                                        const PhaseThreeMoments& m3, Variable aux = Variable::x) {
    return detail::decompose(pop, params, aux, m3, 0.0, 1.0, 0.0, 1.0, {0.0, 1.0, 0.0, 1.0});
}

inline DesignVariance cov_xy_n2_exact(const Population& pop, const AtsdParams& params, const PhaseThreeMoments& m3,
                                      Variable aux = Variable::x) {
    return detail::decompose(pop, params, aux, m3, 1.0, 0.0, 0.0, 1.0, {1.0, 0.0, 0.0, 1.0});
}

// Design-optimal coefficient β_o = cov(ȳ_n2, x̄_n2) / var(x̄_n2).
struct BetaOptimal {
    double value = 0.0;
    double cov = 0.0;
    double var = 0.0;
    bool exact = true;
};

inline BetaOptimal beta_opt_pop(const Population& pop, const AtsdParams& params, const PhaseThreeMoments& m3,
                                Variable aux = Variable::x) {
    const DesignVariance v = var_xbar_n2_exact(pop, params, m3, aux);
    const DesignVariance c = cov_xy_n2_exact(pop, params, m3, aux);
    BetaOptimal b;
    b.var = v.total();
    b.cov = c.total();
    b.exact = m3.exact;
    double ms = 0.0;
    for (int h = 0; h < pop.psu_count(); ++h)
        for (const Unit& u : pop.psu(h)) ms += u.value(aux) * u.value(aux);
    ms /= pop.size();
    if (!(b.var > 1e-12 * ms)) throw std::invalid_argument("beta_opt_pop: var(x̄_n2) is zero");
    b.value = b.cov / b.var;
    return b;
}

inline BetaOptimal beta_opt_pop(const Population& pop, const AtsdParams& params, Variable aux = Variable::x,
                                const ExactOptions& opt = {}) {
    return beta_opt_pop(pop, params, phase_three_moments(pop, params, aux, opt), aux);
}

}  // namespace atsd
