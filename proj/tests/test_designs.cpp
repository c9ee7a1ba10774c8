#include <catch2/catch_amalgamated.hpp>

#include <boost/math/distributions/chi_squared.hpp>

#include <atsd/enumeration.hpp>
#include <atsd/estimators.hpp>
#include <atsd/fixtures.hpp>
#include <atsd/rng.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

using namespace atsd;
using Catch::Matchers::WithinAbs;

namespace {

std::string sorted_labels(const PsuAdaptiveSample& s, const std::vector<std::size_t>& pos) {
    std::vector<int> labels;
    for (std::size_t i : pos) labels.push_back(s.frame[i].ssu);
    std::sort(labels.begin(), labels.end());
    std::string out;
    for (int l : labels) out += std::to_string(l) + ",";
    return out;
}

// Draw key independent of frame order and slot order.
std::string draw_key(const AtsdSample& d) {
    std::vector<std::string> slots;
    for (const auto& s : d.psus) {
        std::vector<std::size_t> all(s.frame.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        slots.push_back(std::to_string(s.psu) + ":" + sorted_labels(s, all) + "|" + sorted_labels(s, s.initial) + "|" +
                        sorted_labels(s, s.added));
    }
    std::sort(slots.begin(), slots.end());
    std::string out;
    for (const auto& s : slots) out += s + ";";
    return out;
}

struct ChiSquare {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    long unseen = 0;  // simulated keys missing from the enumeration
};

// Pearson chi-square of observed counts against exact probabilities; cells
// with expected count below 5 are pooled.
ChiSquare chi_square(const std::map<std::string, double>& exact, const std::map<std::string, long>& observed,
                     long draws) {
    ChiSquare c;
    for (const auto& [k, n] : observed)
        if (!exact.count(k)) c.unseen += n;
    double pooled_e = 0.0, pooled_o = 0.0;
    int cells = 0;
    for (const auto& [k, p] : exact) {
        const double e = p * static_cast<double>(draws);
        const auto it = observed.find(k);
        const double o = it == observed.end() ? 0.0 : static_cast<double>(it->second);
        if (e < 5.0) {
            pooled_e += e;
            pooled_o += o;
            continue;
        }
        c.statistic += (o - e) * (o - e) / e;
        ++cells;
    }
    if (pooled_e > 0.0) {
        c.statistic += (pooled_o - pooled_e) * (pooled_o - pooled_e) / pooled_e;
        ++cells;
    }
    c.dof = cells - 1;
    if (c.dof > 0) c.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(c.dof), c.statistic));
    return c;
}

Population uniform_pop(int M, int Nh, double every) {
    std::vector<std::vector<double>> y(static_cast<std::size_t>(M), std::vector<double>(static_cast<std::size_t>(Nh), 0.0));
    for (auto& psu : y)
        for (std::size_t j = 0; j < psu.size(); j += static_cast<std::size_t>(every)) psu[j] = 1.0;
    return make_population(y, y);
}

}  // namespace

TEST_CASE("SRSWOR N=5, n=2 pair frequencies", "[designs]") {
    DrawRng rng(2024, 1);
    constexpr long draws = 1000000;
    std::map<std::pair<std::size_t, std::size_t>, long> counts;
    for (long r = 0; r < draws; ++r) {
        auto s = srswor(5, 2, rng);
        std::sort(s.begin(), s.end());
        ++counts[{s[0], s[1]}];
    }
    REQUIRE(counts.size() == 10);
    const double sigma = std::sqrt(0.1 * 0.9 / draws);
    for (const auto& [pair, n] : counts) CHECK_THAT(static_cast<double>(n) / draws, WithinAbs(0.1, 3.0 * sigma));
}

TEST_CASE("srswor rejects oversized samples", "[designs]") {
    DrawRng rng(1, 1);
    CHECK_THROWS_AS(srswor(3, 4, rng), std::invalid_argument);
    CHECK(srswor(4, 4, rng).size() == 4);
}

TEST_CASE("Sequential expansion laws", "[designs]") {
    const Condition on_x{Variable::x, false, 0.0};
    std::vector<Unit> frame;
    for (int j = 0; j < 12; ++j) {
        Unit u;
        u.ssu = j + 1;
        u.x = j % 3 == 0 ? 1.0 : 0.0;
        frame.push_back(u);
    }
    DrawRng rng(77, 3);
    for (int r = 0; r < 2000; ++r) {
        const int d = r % 4;
        const PsuAdaptiveSample s = sequential_expand(frame, 4, d, on_x, rng);
        REQUIRE(s.n_initial() == 4);
        int l = 0;
        for (std::size_t i : s.initial) l += on_x.satisfied(s.frame[i]) ? 1 : 0;
        CHECK(s.l_initial == l);
        CHECK(static_cast<int>(s.added.size()) == std::min(d * l, 12 - 4));
        CHECK(s.capped == (d * l > 8));
        if (d == 0 || l == 0) CHECK(s.added.empty());
        std::vector<std::size_t> all = s.initial;
        all.insert(all.end(), s.added.begin(), s.added.end());
        std::sort(all.begin(), all.end());
        CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    }
    CHECK_THROWS_AS(sequential_expand(frame, 0, 1, on_x, rng), std::invalid_argument);
    CHECK_THROWS_AS(sequential_expand(frame, 13, 1, on_x, rng), std::invalid_argument);
    CHECK_THROWS_AS(sequential_expand(frame, 2, -1, on_x, rng), std::invalid_argument);
    CHECK_THROWS_AS(sequential_expand({}, 1, 1, on_x, rng), std::invalid_argument);
}

TEST_CASE("ATSD draws follow the enumerated path law", "[designs][oracle]") {
    constexpr double alpha = 0.001;
    constexpr long draws = 1000000;
    for (const Fixture& f : tiny_fixtures()) {
        std::map<std::string, double> exact;
        double total = 0.0;
        enumerate_atsd(f.pop, f.params, [&](const AtsdSample& d, double p) {
            exact[draw_key(d)] += p;
            total += p;
        });
        REQUIRE_THAT(total, WithinAbs(1.0, 1e-12));
        std::map<std::string, long> observed;
        DrawRng root(555, 0);
        for (long r = 0; r < draws; ++r) {
            DrawRng rng = root.substream(static_cast<std::uint64_t>(r));
            ++observed[draw_key(run_atsd(f.pop, f.params, rng))];
        }
        const ChiSquare c = chi_square(exact, observed, draws);
        INFO(f.name << ": chi2 " << c.statistic << " on " << c.dof << " dof, p " << c.p_value);
        CHECK(c.unseen == 0);
        CHECK(c.dof > 0);
        CHECK(c.p_value > alpha);
    }
}

TEST_CASE("Monte Carlo means agree with enumeration within 4 SE", "[designs][oracle]") {
    constexpr long draws = 1000000;
    for (const Fixture& f : tiny_fixtures()) {
        using Stat = std::function<double(const DrawSummary&)>;
        const std::vector<std::pair<std::string, Stat>> stats = {
            {"ybar_n2", [](const DrawSummary& s) { return ybar_n2(s); }},
            {"xbar_n2", [](const DrawSummary& s) { return xbar_n2(s); }},
            {"xbar_n1", [](const DrawSummary& s) { return xbar_n1(s); }},
            {"mu_reg fixed", [&](const DrawSummary& s) { return mu_reg(s, RegressionCoefficient::fixed(f.beta)).estimate; }},
            {"mu_reg beta1_hat", [](const DrawSummary& s) { return mu_reg(s, beta1_hat(s)).estimate; }},
            {"mu_reg beta_opt_hat", [](const DrawSummary& s) { return mu_reg(s, beta_opt_hat(s)).estimate; }},
        };
        std::vector<double> exact(stats.size(), 0.0);
        enumerate_atsd(f.pop, f.params, [&](const AtsdSample& d, double p) {
            const DrawSummary s = summarize(d);
            for (std::size_t k = 0; k < stats.size(); ++k) exact[k] += p * stats[k].second(s);
        });
        std::vector<double> sum(stats.size(), 0.0), sum2(stats.size(), 0.0);
        DrawRng root(8080, 0);
        for (long r = 0; r < draws; ++r) {
            DrawRng rng = root.substream(static_cast<std::uint64_t>(r));
            const DrawSummary s = summarize(run_atsd(f.pop, f.params, rng));
            for (std::size_t k = 0; k < stats.size(); ++k) {
                const double v = stats[k].second(s);
                sum[k] += v;
                sum2[k] += v * v;
            }
        }
        for (std::size_t k = 0; k < stats.size(); ++k) {
            const double mean = sum[k] / draws;
            const double se = std::sqrt((sum2[k] / draws - mean * mean) / (draws - 1.0));
            INFO(f.name << " " << stats[k].first << ": mc " << mean << " exact " << exact[k] << " se " << se);
            CHECK(std::fabs(mean - exact[k]) <= 4.0 * se + 1e-12);
        }
    }
}

TEST_CASE("Tiny ATSD plan path probabilities sum to one", "[designs]") {
    const Population pop = make_population({{0, 2, 0, 1}, {3, 0, 0, 0}}, {{1, 1, 0, 1}, {2, 0, 1, 0}});
    const AtsdParams params = AtsdParams::equal(2, 1, 3, 2, 1, Condition{Variable::x, false, 0.0});
    double total = 0.0, ybar = 0.0;
    enumerate_atsd(pop, params, [&](const AtsdSample& d, double p) {
        total += p;
        ybar += p * ybar_n2(d);
    });
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));
    CHECK_THAT(ybar, WithinAbs(pop.mean(Variable::y), 1e-12));
}

TEST_CASE("Census plan collapses to the population", "[designs]") {
    const Population pop = make_population({{0, 2, 0, 1}, {3, 0, 0, 0}}, {{1, 1, 0, 1}, {2, 0, 1, 0}});
    const AtsdParams params = AtsdParams::equal(2, 2, 4, 4, 3, Condition{Variable::x, false, 0.0});
    DrawRng rng(3, 3);
    for (int r = 0; r < 50; ++r) {
        const AtsdSample d = run_atsd(pop, params, rng);
        CHECK(d.n_aux() == 8);
        CHECK(d.n_y() == 8);
        CHECK(ybar_n2(d) == pop.mean(Variable::y));
        CHECK(xbar_n1(d) == pop.mean(Variable::x));
    }
}

TEST_CASE("ATSD sample sizes", "[designs]") {
    const Population pop = uniform_pop(4, 100, 7);
    const AtsdParams params = AtsdParams::equal(4, 4, 50, 10, 4, Condition{Variable::x, false, 0.0});
    DrawRng rng(12, 0);
    for (int r = 0; r < 100; ++r) {
        const AtsdSample d = run_atsd(pop, params, rng);
        CHECK(d.m() == 4);
        CHECK(d.n_aux() == 200);
        int expect = 0;
        for (const auto& s : d.psus) expect += 10 + std::min(4 * s.l_initial, 40);
        CHECK(d.n_y() == expect);
    }
    AtsdParams bad = params;
    bad.n2h1 = 51;
    CHECK_THROWS_AS(run_atsd(pop, bad, rng), std::invalid_argument);
    bad = params;
    bad.m = 5;
    CHECK_THROWS_AS(run_atsd(pop, bad, rng), std::invalid_argument);
}

TEST_CASE("ATS treats each selected PSU as the frame", "[designs]") {
    const Population pop = uniform_pop(4, 25, 5);
    DrawRng rng(4, 4);
    for (int r = 0; r < 100; ++r) {
        const AtsdSample d = run_ats(pop, 2, 6, 2, rng);
        REQUIRE(d.m() == 2);
        for (const auto& s : d.psus) {
            CHECK(s.frame_size() == 25);
            CHECK(s.condition.var == Variable::y);
            CHECK(s.n_final() == 6 + std::min(2 * s.l_initial, 19));
        }
    }
}

TEST_CASE("Two-stage M=2, N_h=2, m=1, n=1 has four equiprobable draws", "[designs]") {
    const Population pop = make_population({{1, 2}, {3, 4}}, {{0, 0}, {0, 0}});
    std::map<double, double> exact;
    const double paths = enumerate_two_stage(pop, 1, 1, [&](const TwoStageSample& d, double p) {
        exact[d.slots[0].units[0].y] += p;
    });
    CHECK(paths == 4.0);
    for (const auto& [y, p] : exact) CHECK_THAT(p, WithinAbs(0.25, 1e-15));
    DrawRng rng(9, 9);
    std::map<double, long> seen;
    constexpr long draws = 400000;
    for (long r = 0; r < draws; ++r) ++seen[run_two_stage(pop, 1, 1, rng).slots[0].units[0].y];
    REQUIRE(seen.size() == 4);
    const double sigma = std::sqrt(0.25 * 0.75 / draws);
    for (const auto& [y, n] : seen) CHECK_THAT(static_cast<double>(n) / draws, WithinAbs(0.25, 4.0 * sigma));
}

TEST_CASE("SRSWOR N=6, n=2 mean variance matches the closed form", "[designs]") {
    const Population pop = make_population({{0, 1, 4}, {2, 0, 5}}, {{0, 0, 0}, {0, 0, 0}});
    Distribution dist;
    const double paths = enumerate_srswor(pop, 2, [&](const SrsSample& s, double p) { dist.add(srs_mean(s).estimate, p); });
    CHECK(paths == 15.0);
    const double S2 = compute_stats(pop).variance_of(Variable::y);
    CHECK_THAT(dist.mean(), WithinAbs(2.0, 1e-14));
    CHECK_THAT(dist.variance(), WithinAbs((1.0 - 2.0 / 6.0) * S2 / 2.0, 1e-14));
}

TEST_CASE("Two-stage double sampling sizes", "[designs]") {
    const Population pop = uniform_pop(4, 100, 3);
    DrawRng rng(5, 5);
    const TwoPhaseSample d = run_two_stage_double(pop, 3, 50, 12, rng);
    CHECK(d.m() == 3);
    CHECK(d.n_aux() == 150);
    CHECK(d.n_y() == 36);
    CHECK_THROWS_AS(run_two_stage_double(pop, 3, 50, 51, rng), std::invalid_argument);
}

TEST_CASE("Enumeration guard trips with a size estimate", "[designs]") {
    const Population pop = uniform_pop(4, 100, 7);
    const AtsdParams params = AtsdParams::equal(4, 4, 50, 10, 4, Condition{Variable::x, false, 0.0});
    try {
        enumerate_atsd(pop, params, [](const AtsdSample&, double) {}, 1e4);
        FAIL("expected EnumerationTooLarge");
    } catch (const EnumerationTooLarge& e) {
        CHECK(e.estimate() > 1e4);
    }
}
