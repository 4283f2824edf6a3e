#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hart::eval {

// ppl_model / ppl_baseline. Both must be positive.
double adjusted_perplexity(double ppl_model, double ppl_baseline);

// Support-weighted mean of per-class F1 over classes 0..n_classes-1. A class
// with precision + recall = 0 scores 0.
double weighted_f1(std::span<const int> predictions, std::span<const int> golds,
                   std::size_t n_classes);
double macro_f1(std::span<const int> predictions, std::span<const int> golds,
                std::size_t n_classes);
double accuracy(std::span<const int> predictions, std::span<const int> golds);

// Sample Pearson correlation. Throws on length mismatch, n < 2 or zero variance.
double pearson_r(std::span<const double> x, std::span<const double> y);
// r / sqrt(reliability), reliability in (0, 1].
double disattenuated_r(double r, double reliability);

double mean_squared_error(std::span<const double> pred, std::span<const double> gold);

struct Significance {
    std::string comparator;
    std::string test;  // "permutation" or "bootstrap"
    double p_value = 1.0;
    std::size_t n_resamples = 0;
    std::uint64_t seed = 0;
};

struct MetricReport {
    std::string metric;
    double value = 0.0;
    std::vector<double> per_instance;
    std::vector<Significance> significance;
};

}  // namespace hart::eval
