#include "hart/eval/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace hart::eval {

double adjusted_perplexity(double ppl_model, double ppl_baseline) {
    if (!(ppl_model > 0.0) || !(ppl_baseline > 0.0)) {
        throw std::invalid_argument("adjusted_perplexity: perplexities must be positive");
    }
    return ppl_model / ppl_baseline;
}

namespace {

struct ClassCounts {
    std::vector<double> tp, fp, fn, support;
};

ClassCounts count_classes(std::span<const int> pred, std::span<const int> gold, std::size_t k) {
    if (pred.size() != gold.size()) {
        throw std::invalid_argument("F1: predictions and golds differ in length");
    }
    ClassCounts c{std::vector<double>(k), std::vector<double>(k), std::vector<double>(k),
                  std::vector<double>(k)};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i];
        const int g = gold[i];
        if (p < 0 || g < 0 || static_cast<std::size_t>(p) >= k || static_cast<std::size_t>(g) >= k) {
            throw std::invalid_argument("F1: label outside the class set");
        }
        c.support[g] += 1;
        if (p == g) {
            c.tp[g] += 1;
        } else {
            c.fp[p] += 1;
            c.fn[g] += 1;
        }
    }
    return c;
}

double class_f1(const ClassCounts& c, std::size_t i) {
    const double denom = 2 * c.tp[i] + c.fp[i] + c.fn[i];
    return denom > 0 ? 2 * c.tp[i] / denom : 0.0;
}

}  // namespace

double weighted_f1(std::span<const int> predictions, std::span<const int> golds,
                   std::size_t n_classes) {
    const auto c = count_classes(predictions, golds, n_classes);
    if (golds.empty()) throw std::invalid_argument("F1: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < n_classes; ++i) s += c.support[i] * class_f1(c, i);
    return s / static_cast<double>(golds.size());
}

double macro_f1(std::span<const int> predictions, std::span<const int> golds,
                std::size_t n_classes) {
    const auto c = count_classes(predictions, golds, n_classes);
    if (n_classes == 0) throw std::invalid_argument("F1: no classes");
    double s = 0.0;
    for (std::size_t i = 0; i < n_classes; ++i) s += class_f1(c, i);
    return s / static_cast<double>(n_classes);
}

double accuracy(std::span<const int> predictions, std::span<const int> golds) {
    if (predictions.size() != golds.size() || golds.empty()) {
        throw std::invalid_argument("accuracy: inputs must be non-empty and equally long");
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) hit += predictions[i] == golds[i];
    return static_cast<double>(hit) / static_cast<double>(golds.size());
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson_r: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson_r: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson_r: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

double disattenuated_r(double r, double reliability) {
    if (!(reliability > 0.0 && reliability <= 1.0)) {
        throw std::invalid_argument("disattenuated_r: reliability must be in (0, 1]");
    }
    return r / std::sqrt(reliability);
}

double mean_squared_error(std::span<const double> pred, std::span<const double> gold) {
    if (pred.size() != gold.size() || pred.empty()) {
        throw std::invalid_argument("mse: inputs must be non-empty and equally long");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - gold[i]) * (pred[i] - gold[i]);
    return s / static_cast<double>(pred.size());
}

}  // namespace hart::eval
