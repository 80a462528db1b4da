#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <cmath>
#include <map>
#include <vector>

namespace sweepsim {

/// Streaming mean/variance with an associative merge, so per-worker
/// accumulators can be combined in any grouping.
class RunningStats {
public:
    void add(double x) noexcept;
    void merge(const RunningStats& other) noexcept;

    std::uint64_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept;
    double std_error() const noexcept;

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

double median(std::vector<double> values);
/// Linear-interpolation quantile (type 7), q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_two_sample(std::vector<double> a, std::vector<double> b);
/// One-sample Kolmogorov-Smirnov statistic against a continuous cdf.
double ks_one_sample(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Total-variation distance between two empirical laws given as tallies.
template <class Key>
double tv_distance(const std::map<Key, std::uint64_t>& a, const std::map<Key, std::uint64_t>& b) {
    double na = 0.0, nb = 0.0;
    for (const auto& [k, c] : a) na += static_cast<double>(c);
    for (const auto& [k, c] : b) nb += static_cast<double>(c);
    double sum = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() || ib != b.end()) {
        if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
            sum += static_cast<double>(ia->second) / na;
            ++ia;
        } else if (ia == a.end() || ib->first < ia->first) {
            sum += static_cast<double>(ib->second) / nb;
            ++ib;
        } else {
            sum += std::abs(static_cast<double>(ia->second) / na - static_cast<double>(ib->second) / nb);
            ++ia;
            ++ib;
        }
    }
    return 0.5 * sum;
}

/// Total-variation distance between an empirical tally and an exact law.
template <class Key>
double tv_distance_to(const std::map<Key, std::uint64_t>& tally, const std::map<Key, double>& law) {
    double n = 0.0;
    for (const auto& [k, c] : tally) n += static_cast<double>(c);
    double sum = 0.0;
    double covered = 0.0;
    for (const auto& [k, p] : law) {
        const auto it = tally.find(k);
        const double emp = it == tally.end() ? 0.0 : static_cast<double>(it->second) / n;
        sum += std::abs(emp - p);
        covered += p;
    }
    for (const auto& [k, c] : tally)
        if (!law.count(k)) sum += static_cast<double>(c) / n;
    sum += std::max(0.0, 1.0 - covered);
    return 0.5 * sum;
}

/// Pearson chi-square goodness of fit; returns the upper-tail p-value.
/// Categories with zero expected probability must have zero counts.
double chi_square_pvalue(const std::vector<std::uint64_t>& observed, const std::vector<double>& probabilities);

/// Proportion estimate with binomial standard error.
struct Proportion {
    double p_hat = 0.0;
    double std_err = 0.0;
    std::uint64_t n = 0;
};

Proportion proportion(std::uint64_t successes, std::uint64_t n);

}  // namespace sweepsim
