#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace hart::eval {

// Statistic of a paired comparison after swapping system outputs on the
// items where swapped[i] != 0 (permutation) or on a resample of item indices
// (bootstrap).
using SwapStatistic = std::function<double(std::span<const std::uint8_t> swapped)>;
using ResampleStatistic = std::function<double(std::span<const std::size_t> indices)>;

// Paired sign-flip test. Two-sided:
//   p = (1 + #{|stat*| >= |stat_obs|}) / (1 + n_resamples).
double permutation_test(std::size_t n_items, const SwapStatistic& stat, std::size_t n_resamples,
                        std::uint64_t seed);

// mean(a - b) as the statistic.
double permutation_test(std::span<const double> a, std::span<const double> b,
                        std::size_t n_resamples, std::uint64_t seed);

// Paired bootstrap, null-centred: resamples item indices with replacement and
// counts |stat* - stat_obs| >= |stat_obs|, same smoothing as above.
double bootstrap_test(std::size_t n_items, const ResampleStatistic& stat,
                      std::size_t n_resamples, std::uint64_t seed);

double bootstrap_test(std::span<const double> a, std::span<const double> b,
                      std::size_t n_resamples, std::uint64_t seed);

// Difference of a metric between two systems' label predictions, e.g.
// weighted F1 of A minus weighted F1 of B, tested by swapping predictions.
using LabelMetric = std::function<double(std::span<const int> pred, std::span<const int> gold)>;
double permutation_test_labels(std::span<const int> pred_a, std::span<const int> pred_b,
                               std::span<const int> gold, const LabelMetric& metric,
                               std::size_t n_resamples, std::uint64_t seed);

// One-sample Kolmogorov-Smirnov distance of `samples` against U(0, 1).
double ks_uniform_distance(std::vector<double> samples);

}  // namespace hart::eval
