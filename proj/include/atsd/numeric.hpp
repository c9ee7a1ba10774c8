#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace atsd {

// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::fabs(sum_) >= std::fabs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    CompensatedSum& operator+=(double v) noexcept {
        add(v);
        return *this;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) {
    CompensatedSum s;
    for (double v : values) s.add(v);
    return s.value();
}

// Two-pass mean and covariance (divisor n - 1). Groups of size < 2 have
// covariance 0.
struct PairMoments {
    std::size_t count = 0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double cov = 0.0;
};

inline PairMoments pair_moments(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("pair_moments: size mismatch");
    PairMoments out;
    out.count = a.size();
    if (a.empty()) return out;
    CompensatedSum sa, sb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa.add(a[i]);
        sb.add(b[i]);
    }
    const double n = static_cast<double>(a.size());
    out.mean_a = sa.value() / n;
    out.mean_b = sb.value() / n;
    if (a.size() < 2) return out;
    CompensatedSum cross;
    for (std::size_t i = 0; i < a.size(); ++i) cross.add((a[i] - out.mean_a) * (b[i] - out.mean_b));
    out.cov = cross.value() / (n - 1.0);
    return out;
}

inline double sample_variance(std::span<const double> v) { return pair_moments(v, v).cov; }

inline double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return compensated_sum(v) / static_cast<double>(v.size());
}

// Binomial coefficient as a double; exact while the result fits in 53 bits.
inline double binomial(int n, int k) {
    if (k < 0 || n < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r < 9.0e15 ? std::round(r) : r;
}

// Table of log(k!) for repeated hypergeometric evaluations.
class LogFactorials {
public:
    explicit LogFactorials(int max_n) : table_(static_cast<std::size_t>(max_n) + 1, 0.0) {
        for (int k = 2; k <= max_n; ++k)
            table_[static_cast<std::size_t>(k)] =
                table_[static_cast<std::size_t>(k - 1)] + std::log(static_cast<double>(k));
    }
    int max_n() const noexcept { return static_cast<int>(table_.size()) - 1; }
    double operator()(int k) const { return table_.at(static_cast<std::size_t>(k)); }
    double log_binomial(int n, int k) const { return (*this)(n) - (*this)(k) - (*this)(n - k); }

    // P(K = k) for K ~ Hypergeometric(draws, successes, population).
    double hypergeometric(int k, int draws, int successes, int population) const {
        if (k < 0 || k > draws || k > successes || draws - k > population - successes) return 0.0;
        return std::exp(log_binomial(successes, k) + log_binomial(population - successes, draws - k) -
                        log_binomial(population, draws));
    }

private:
    std::vector<double> table_;
};

// Visits every k-subset of {0, ..., n-1} in lexicographic order. The callback
// receives the current combination; returning false stops the walk.
template <class Fn>
void for_each_combination(int n, int k, Fn&& fn) {
    if (k < 0 || k > n) return;
    std::vector<std::size_t> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
    while (true) {
        if constexpr (std::is_same_v<std::invoke_result_t<Fn, const std::vector<std::size_t>&>, bool>) {
            if (!fn(static_cast<const std::vector<std::size_t>&>(idx))) return;
        } else {
            fn(static_cast<const std::vector<std::size_t>&>(idx));
        }
        int i = k - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == static_cast<std::size_t>(n - k + i)) --i;
        if (i < 0) return;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j)
            idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

}  // namespace atsd
