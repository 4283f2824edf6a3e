#include "hart/eval/significance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hart/numerics/random.hpp"

namespace hart::eval {
namespace {

void check_args(std::size_t n_items, std::size_t n_resamples) {
    if (n_items == 0) throw std::invalid_argument("significance test: empty inputs");
    if (n_resamples < 100) throw std::invalid_argument("significance test: n_resamples must be >= 100");
}

// Observed statistics within rounding of the resampled ones count as ties.
bool at_least(double x, double observed) {
    return x >= observed - 1e-12 * std::max(1.0, observed);
}

double mean_diff(std::span<const double> a, std::span<const double> b,
                 std::span<const std::uint8_t> swapped) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += swapped[i] ? b[i] - a[i] : a[i] - b[i];
    return s / static_cast<double>(a.size());
}

void check_paired(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("significance test: unpaired inputs");
}

}  // namespace

double permutation_test(std::size_t n_items, const SwapStatistic& stat, std::size_t n_resamples,
                        std::uint64_t seed) {
    check_args(n_items, n_resamples);
    std::vector<std::uint8_t> swapped(n_items, 0);
    const double observed = std::abs(stat(swapped));
    num::Rng rng(seed);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n_resamples; ++r) {
        for (auto& s : swapped) s = static_cast<std::uint8_t>(rng.next_u64() & 1u);
        hits += at_least(std::abs(stat(swapped)), observed);
    }
    return static_cast<double>(1 + hits) / static_cast<double>(1 + n_resamples);
}

double permutation_test(std::span<const double> a, std::span<const double> b,
                        std::size_t n_resamples, std::uint64_t seed) {
    check_paired(a, b);
    return permutation_test(
        a.size(), [&](std::span<const std::uint8_t> sw) { return mean_diff(a, b, sw); },
        n_resamples, seed);
}

double bootstrap_test(std::size_t n_items, const ResampleStatistic& stat,
                      std::size_t n_resamples, std::uint64_t seed) {
    check_args(n_items, n_resamples);
    std::vector<std::size_t> idx(n_items);
    for (std::size_t i = 0; i < n_items; ++i) idx[i] = i;
    const double observed = stat(idx);
    num::Rng rng(seed);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n_resamples; ++r) {
        for (auto& i : idx) i = rng.below(n_items);
        hits += at_least(std::abs(stat(idx) - observed), std::abs(observed));
    }
    return static_cast<double>(1 + hits) / static_cast<double>(1 + n_resamples);
}

double bootstrap_test(std::span<const double> a, std::span<const double> b,
                      std::size_t n_resamples, std::uint64_t seed) {
    check_paired(a, b);
    return bootstrap_test(
        a.size(),
        [&](std::span<const std::size_t> idx) {
            double s = 0.0;
            for (auto i : idx) s += a[i] - b[i];
            return s / static_cast<double>(idx.size());
        },
        n_resamples, seed);
}

double permutation_test_labels(std::span<const int> pred_a, std::span<const int> pred_b,
                               std::span<const int> gold, const LabelMetric& metric,
                               std::size_t n_resamples, std::uint64_t seed) {
    if (pred_a.size() != gold.size() || pred_b.size() != gold.size()) {
        throw std::invalid_argument("significance test: unpaired inputs");
    }
    std::vector<int> pa(gold.size());
    std::vector<int> pb(gold.size());
    return permutation_test(
        gold.size(),
        [&](std::span<const std::uint8_t> sw) {
            for (std::size_t i = 0; i < gold.size(); ++i) {
                pa[i] = sw[i] ? pred_b[i] : pred_a[i];
                pb[i] = sw[i] ? pred_a[i] : pred_b[i];
            }
            return metric(pa, gold) - metric(pb, gold);
        },
        n_resamples, seed);
}

double ks_uniform_distance(std::vector<double> samples) {
    if (samples.empty()) throw std::invalid_argument("ks_uniform_distance: no samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double x = std::clamp(samples[i], 0.0, 1.0);
        d = std::max({d, static_cast<double>(i + 1) / n - x, x - static_cast<double>(i) / n});
    }
    return d;
}

}  // namespace hart::eval
