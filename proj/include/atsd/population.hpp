#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "numeric.hpp"
#include "rng.hpp"

namespace atsd {

enum class Variable { y, x, z, w };

inline std::string_view to_string(Variable v) {
    switch (v) {
        case Variable::y: return "y";
        case Variable::x: return "x";
        case Variable::z: return "z";
        case Variable::w: return "w";
    }
    return "?";
}

inline Variable parse_variable(std::string_view s) {
    if (s == "y") return Variable::y;
    if (s == "x") return Variable::x;
    if (s == "z") return Variable::z;
    if (s == "w") return Variable::w;
    throw std::invalid_argument("unknown variable '" + std::string(s) + "'");
}

// One quadrat. psu and ssu are 1-based labels as they appear in population
// files; the C++ API addresses PSUs and units by 0-based position.
struct Unit {
    int psu = 1;
    int ssu = 1;
    double y = 0.0;
    double x = 0.0;
    double z = 0.0;
    int w = 0;

    double value(Variable v) const noexcept {
        switch (v) {
            case Variable::y: return y;
            case Variable::x: return x;
            case Variable::z: return z;
            case Variable::w: return static_cast<double>(w);
        }
        return 0.0;
    }

    friend bool operator==(const Unit&, const Unit&) = default;
};

// Adaptive trigger: a unit satisfies the condition when the chosen variable
// exceeds the threshold, or (with or_target) when y does.
struct Condition {
    Variable var = Variable::x;
    bool or_target = false;
    double threshold = 0.0;

    bool satisfied(const Unit& u) const noexcept {
        return u.value(var) > threshold || (or_target && u.y > threshold);
    }

    std::string name() const {
        std::string s(to_string(var));
        if (or_target && var != Variable::y) s += "|y";
        return s;
    }

    friend bool operator==(const Condition&, const Condition&) = default;
};

// Accepts "x", "z", "w", "y", or "<var>|y" (also "<var>_or_y").
inline Condition parse_condition(std::string_view s) {
    Condition c;
    for (std::string_view suffix : {std::string_view("|y"), std::string_view("_or_y")}) {
        if (s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix) {
            c.var = parse_variable(s.substr(0, s.size() - suffix.size()));
            c.or_target = true;
            return c;
        }
    }
    c.var = parse_variable(s);
    return c;
}

class Population {
public:
    Population() = default;

    // Validates every invariant: labels match positions, values are finite
    // and nonnegative, w == 1[y > 0].
    Population(int grid_side, std::uint64_t seed, std::vector<std::vector<Unit>> psus)
        : grid_side_(grid_side), seed_(seed), psus_(std::move(psus)) {
        if (psus_.empty()) throw std::invalid_argument("population: no PSUs");
        for (std::size_t h = 0; h < psus_.size(); ++h) {
            if (psus_[h].empty()) throw std::invalid_argument("population: empty PSU");
            for (std::size_t j = 0; j < psus_[h].size(); ++j) {
                const Unit& u = psus_[h][j];
                if (u.psu != static_cast<int>(h) + 1 || u.ssu != static_cast<int>(j) + 1)
                    throw std::invalid_argument("population: unit labels out of order");
                for (double v : {u.y, u.x, u.z})
                    if (!std::isfinite(v) || v < 0.0)
                        throw std::invalid_argument("population: values must be finite and >= 0");
                if (u.w != (u.y > 0.0 ? 1 : 0))
                    throw std::invalid_argument("population: w inconsistent with y at (" +
                                                std::to_string(u.psu) + "," + std::to_string(u.ssu) + ")");
            }
            size_ += static_cast<int>(psus_[h].size());
        }
    }

    int psu_count() const noexcept { return static_cast<int>(psus_.size()); }
    int size() const noexcept { return size_; }
    int grid_side() const noexcept { return grid_side_; }
    std::uint64_t seed() const noexcept { return seed_; }

    int psu_size(int h) const { return static_cast<int>(psus_.at(static_cast<std::size_t>(h)).size()); }
    const std::vector<Unit>& psu(int h) const { return psus_.at(static_cast<std::size_t>(h)); }
    const Unit& unit(int h, int j) const { return psu(h).at(static_cast<std::size_t>(j)); }

    std::vector<int> psu_sizes() const {
        std::vector<int> out;
        for (const auto& p : psus_) out.push_back(static_cast<int>(p.size()));
        return out;
    }

    double psu_total(int h, Variable v) const {
        CompensatedSum s;
        for (const Unit& u : psu(h)) s.add(u.value(v));
        return s.value();
    }

    double total(Variable v) const {
        CompensatedSum s;
        for (const auto& p : psus_)
            for (const Unit& u : p) s.add(u.value(v));
        return s.value();
    }

    double mean(Variable v) const { return total(v) / static_cast<double>(size_); }

    friend bool operator==(const Population& a, const Population& b) {
        return a.grid_side_ == b.grid_side_ && a.seed_ == b.seed_ && a.psus_ == b.psus_;
    }

private:
    int grid_side_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<std::vector<Unit>> psus_;
    int size_ = 0;
};

// Builds a population from per-PSU value lists; w is derived from y.
inline Population make_population(const std::vector<std::vector<double>>& y,
                                  const std::vector<std::vector<double>>& x,
                                  const std::vector<std::vector<double>>& z = {}) {
    if (x.size() != y.size() || (!z.empty() && z.size() != y.size()))
        throw std::invalid_argument("make_population: PSU count mismatch");
    std::vector<std::vector<Unit>> psus(y.size());
    for (std::size_t h = 0; h < y.size(); ++h) {
        if (x[h].size() != y[h].size() || (!z.empty() && z[h].size() != y[h].size()))
            throw std::invalid_argument("make_population: PSU size mismatch");
        for (std::size_t j = 0; j < y[h].size(); ++j) {
            Unit u;
            u.psu = static_cast<int>(h) + 1;
            u.ssu = static_cast<int>(j) + 1;
            u.y = y[h][j];
            u.x = x[h][j];
            u.z = z.empty() ? 0.0 : z[h][j];
            u.w = u.y > 0.0 ? 1 : 0;
            psus[h].push_back(u);
        }
    }
    return Population(0, 0, std::move(psus));
}

// ---------------------------------------------------------------------------
// Poisson cluster process generator
// ---------------------------------------------------------------------------

// How an auxiliary count field is derived from the target point pattern.
// Each target individual is also counted with probability `keep`; every
// target cluster spawns Poisson(extra_per_cluster) additional individuals
// around the same centre; an independent cluster process and a per-quadrat
// Poisson background add unrelated mass.
struct AuxiliaryModel {
    double keep = 1.0;
    double extra_per_cluster = 0.0;
    double extra_dispersion = 1.0;
    double noise_clusters = 0.0;
    double noise_points = 0.0;
    double noise_dispersion = 1.0;
    double background = 0.0;

    void validate(std::string_view name) const {
        const std::string prefix = "auxiliary model " + std::string(name) + ": ";
        if (!(keep >= 0.0 && keep <= 1.0)) throw std::invalid_argument(prefix + "keep must lie in [0,1]");
        for (double v : {extra_per_cluster, noise_clusters, noise_points, background})
            if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(prefix + "rates must be >= 0");
        for (double v : {extra_dispersion, noise_dispersion})
            if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(prefix + "dispersions must be > 0");
    }

    friend bool operator==(const AuxiliaryModel&, const AuxiliaryModel&) = default;
};

struct PopulationSpec {
    int grid_side = 20;
    int psus = 4;
    double cluster_rate = 5.0;         // Poisson mean number of clusters
    double points_per_cluster = 15.0;  // Poisson mean individuals per cluster
    double dispersion = 0.7;           // mean exponential distance from the centre
    AuxiliaryModel x;
    AuxiliaryModel z;
    std::uint64_t seed = 42;

    void validate() const {
        if (grid_side < 1) throw std::invalid_argument("population spec: grid must be >= 1");
        if (psus < 1) throw std::invalid_argument("population spec: PSU count must be >= 1");
        if ((grid_side * grid_side) % psus != 0)
            throw std::invalid_argument("population spec: grid cells not divisible into equal PSUs");
        for (double v : {cluster_rate, points_per_cluster, dispersion})
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::invalid_argument("population spec: rates and scales must be > 0");
        x.validate("x");
        z.validate("z");
    }

    friend bool operator==(const PopulationSpec&, const PopulationSpec&) = default;
};

// Maps a grid cell (col, row) to (PSU position, unit position). Square
// blocks when the PSU count is a perfect square dividing the grid side,
// otherwise contiguous row-major runs of equal length.
struct GridLayout {
    int side = 0;
    int psus = 0;
    int blocks_per_row = 0;  // > 0 for square-block layout
    int block_side = 0;

    GridLayout(int grid_side, int psu_count) : side(grid_side), psus(psu_count) {
        const int q = static_cast<int>(std::lround(std::sqrt(static_cast<double>(psu_count))));
        if (q * q == psu_count && grid_side % q == 0) {
            blocks_per_row = q;
            block_side = grid_side / q;
        }
    }

    int cells_per_psu() const { return side * side / psus; }

    std::pair<int, int> locate(int col, int row) const {
        if (blocks_per_row > 0) {
            const int h = (row / block_side) * blocks_per_row + col / block_side;
            const int j = (row % block_side) * block_side + col % block_side;
            return {h, j};
        }
        const int cell = row * side + col;
        return {cell / cells_per_psu(), cell % cells_per_psu()};
    }
};

namespace detail {

struct Point {
    double px;
    double py;
};

inline void scatter(std::vector<double>& counts, int side, double cx, double cy, std::int64_t n,
                    double scale, DrawRng& rng, std::vector<Point>* kept = nullptr) {
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::int64_t i = 0; i < n; ++i) {
        const double r = rng.exponential(scale);
        const double theta = two_pi * rng.uniform01();
        const double px = cx + r * std::cos(theta);
        const double py = cy + r * std::sin(theta);
        // Clipping: individuals outside the square are discarded.
        if (px < 0.0 || py < 0.0 || px >= side || py >= side) continue;
        counts[static_cast<std::size_t>(static_cast<int>(py) * side + static_cast<int>(px))] += 1.0;
        if (kept) kept->push_back({px, py});
    }
}

inline std::vector<double> auxiliary_field(const AuxiliaryModel& model, int side,
                                           const std::vector<Point>& centres,
                                           const std::vector<Point>& individuals, DrawRng rng) {
    std::vector<double> field(static_cast<std::size_t>(side * side), 0.0);
    DrawRng keep_rng = rng.substream(0);
    for (const Point& p : individuals)
        if (keep_rng.bernoulli(model.keep))
            field[static_cast<std::size_t>(static_cast<int>(p.py) * side + static_cast<int>(p.px))] += 1.0;

    DrawRng extra_rng = rng.substream(1);
    for (const Point& c : centres)
        scatter(field, side, c.px, c.py, extra_rng.poisson(model.extra_per_cluster), model.extra_dispersion,
                extra_rng);

    DrawRng noise_rng = rng.substream(2);
    const std::int64_t noise_count = noise_rng.poisson(model.noise_clusters);
    for (std::int64_t k = 0; k < noise_count; ++k) {
        const double cx = side * noise_rng.uniform01();
        const double cy = side * noise_rng.uniform01();
        scatter(field, side, cx, cy, noise_rng.poisson(model.noise_points), model.noise_dispersion, noise_rng);
    }

    DrawRng background_rng = rng.substream(3);
    if (model.background > 0.0)
        for (double& v : field) v += static_cast<double>(background_rng.poisson(model.background));
    return field;
}

}  // namespace detail

// Poisson cluster process on a grid_side x grid_side square: Poisson number
// of clusters with uniform centres, Poisson individuals per cluster at an
// exponential distance and uniform direction. y is the count per quadrat;
// x and z follow their AuxiliaryModel. Deterministic in spec.seed.
inline Population generate_population(const PopulationSpec& spec) {
    spec.validate();
    const int side = spec.grid_side;
    const DrawRng root(spec.seed, 0);

    DrawRng cluster_rng = root.substream(0);
    std::vector<double> y(static_cast<std::size_t>(side * side), 0.0);
    std::vector<detail::Point> centres;
    std::vector<detail::Point> individuals;
    const std::int64_t clusters = cluster_rng.poisson(spec.cluster_rate);
    for (std::int64_t k = 0; k < clusters; ++k) {
        const double cx = side * cluster_rng.uniform01();
        const double cy = side * cluster_rng.uniform01();
        centres.push_back({cx, cy});
        detail::scatter(y, side, cx, cy, cluster_rng.poisson(spec.points_per_cluster), spec.dispersion,
                        cluster_rng, &individuals);
    }
    const auto x = detail::auxiliary_field(spec.x, side, centres, individuals, root.substream(1));
    const auto z = detail::auxiliary_field(spec.z, side, centres, individuals, root.substream(2));

    const GridLayout layout(side, spec.psus);
    std::vector<std::vector<Unit>> psus(static_cast<std::size_t>(spec.psus),
                                        std::vector<Unit>(static_cast<std::size_t>(layout.cells_per_psu())));
    for (int row = 0; row < side; ++row) {
        for (int col = 0; col < side; ++col) {
            const auto [h, j] = layout.locate(col, row);
            const auto cell = static_cast<std::size_t>(row * side + col);
            Unit& u = psus[static_cast<std::size_t>(h)][static_cast<std::size_t>(j)];
            u.psu = h + 1;
            u.ssu = j + 1;
            u.y = y[cell];
            u.x = x[cell];
            u.z = z[cell];
            u.w = u.y > 0.0 ? 1 : 0;
        }
    }
    return Population(side, spec.seed, std::move(psus));
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

struct PopulationStats {
    int N = 0;
    int M = 0;
    // Indexed by Variable (y, x, z, w).
    double mean[4] = {};
    double variance[4] = {};
    // Correlation with y; empty when either variable has zero variance.
    std::optional<double> corr_xy;
    std::optional<double> corr_zy;
    std::optional<double> corr_wy;
    std::vector<double> psu_total_y;
    std::vector<double> psu_total_x;
    // Rarity L_h / N_h of the condition, per PSU.
    Condition condition;
    std::vector<int> condition_count;
    std::vector<double> rarity;

    double mean_of(Variable v) const { return mean[static_cast<int>(v)]; }
    double variance_of(Variable v) const { return variance[static_cast<int>(v)]; }
};

inline std::optional<double> population_correlation(const Population& pop, Variable a, Variable b) {
    std::vector<double> va, vb;
    for (int h = 0; h < pop.psu_count(); ++h)
        for (const Unit& u : pop.psu(h)) {
            va.push_back(u.value(a));
            vb.push_back(u.value(b));
        }
    const double saa = pair_moments(va, va).cov;
    const double sbb = pair_moments(vb, vb).cov;
    if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
    return pair_moments(va, vb).cov / std::sqrt(saa * sbb);
}

inline PopulationStats compute_stats(const Population& pop, Condition condition = {Variable::y, false, 0.0}) {
    PopulationStats s;
    s.N = pop.size();
    s.M = pop.psu_count();
    s.condition = condition;
    for (Variable v : {Variable::y, Variable::x, Variable::z, Variable::w}) {
        std::vector<double> vals;
        vals.reserve(static_cast<std::size_t>(pop.size()));
        for (int h = 0; h < pop.psu_count(); ++h)
            for (const Unit& u : pop.psu(h)) vals.push_back(u.value(v));
        s.mean[static_cast<int>(v)] = pop.total(v) / static_cast<double>(pop.size());
        s.variance[static_cast<int>(v)] = sample_variance(vals);
    }
    s.corr_xy = population_correlation(pop, Variable::x, Variable::y);
    s.corr_zy = population_correlation(pop, Variable::z, Variable::y);
    s.corr_wy = population_correlation(pop, Variable::w, Variable::y);
    for (int h = 0; h < pop.psu_count(); ++h) {
        s.psu_total_y.push_back(pop.psu_total(h, Variable::y));
        s.psu_total_x.push_back(pop.psu_total(h, Variable::x));
        int count = 0;
        for (const Unit& u : pop.psu(h)) count += condition.satisfied(u) ? 1 : 0;
        s.condition_count.push_back(count);
        s.rarity.push_back(static_cast<double>(count) / static_cast<double>(pop.psu_size(h)));
    }
    return s;
}

// Exact population quantities entering the design variance of the
// regression estimator: between-PSU (co)variances of PSU totals and
// within-PSU (co)variances, all with the usual n - 1 divisors.
struct VarianceComponents {
    double s2_ty = 0.0;   // S^2 of PSU totals of y
    double s2_tx = 0.0;   // S^2 of PSU totals of the auxiliary
    double s_txty = 0.0;  // covariance of PSU totals
    std::vector<double> s2_y;   // per PSU
    std::vector<double> s2_x;   // per PSU
    std::vector<double> s_xy;   // per PSU
};

inline VarianceComponents population_variance_components(const Population& pop, Variable aux = Variable::x) {
    if (pop.psu_count() < 2) throw std::invalid_argument("variance components: need at least 2 PSUs");
    VarianceComponents vc;
    std::vector<double> ty, tx;
    for (int h = 0; h < pop.psu_count(); ++h) {
        if (pop.psu_size(h) < 2) throw std::invalid_argument("variance components: PSU with fewer than 2 units");
        std::vector<double> ys, xs;
        for (const Unit& u : pop.psu(h)) {
            ys.push_back(u.y);
            xs.push_back(u.value(aux));
        }
        vc.s2_y.push_back(pair_moments(ys, ys).cov);
        vc.s2_x.push_back(pair_moments(xs, xs).cov);
        vc.s_xy.push_back(pair_moments(xs, ys).cov);
        ty.push_back(compensated_sum(ys));
        tx.push_back(compensated_sum(xs));
    }
    vc.s2_ty = pair_moments(ty, ty).cov;
    vc.s2_tx = pair_moments(tx, tx).cov;
    vc.s_txty = pair_moments(tx, ty).cov;
    return vc;
}

}  // namespace atsd
