#include "hart/train/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace hart::train {

AdamW::AdamW(const num::ParameterSet& params, AdamWConfig cfg) : cfg_(cfg) {
    if (cfg_.lr < 0.0) throw std::invalid_argument("learning rate must be >= 0");
    for (auto id : params.ids()) {
        state_.m.emplace_back(params.value(id).shape());
        state_.v.emplace_back(params.value(id).shape());
    }
}

double AdamW::current_lr() const {
    if (cfg_.warmup_steps == 0 || state_.step >= cfg_.warmup_steps) return cfg_.lr;
    return cfg_.lr * static_cast<double>(state_.step + 1) /
           static_cast<double>(cfg_.warmup_steps);
}

double AdamW::step(num::ParameterSet& params, num::Gradients& grads) {
    if (state_.m.size() != params.size()) {
        throw std::invalid_argument("optimizer state does not match parameter set");
    }
    // Norm over trainable parameters only.
    double sq = 0.0;
    for (auto id : params.ids()) {
        if (!params.trainable(id) || !grads.has(id)) continue;
        const auto& g = grads.get(id);
        for (std::size_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
        throw std::runtime_error("non-finite gradient norm");
    }
    const double clip = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

    const double lr = current_lr();
    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (auto id : params.ids()) {
        if (!params.trainable(id)) continue;
        num::Tensor& p = params.value(id);
        num::Tensor& m = state_.m[id.index];
        num::Tensor& v = state_.v[id.index];
        const bool decay = p.rank() >= 2 && cfg_.weight_decay > 0.0;
        const bool has_grad = grads.has(id);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double g = has_grad ? grads.get(id)[i] * clip : 0.0;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            if (decay) p[i] -= lr * cfg_.weight_decay * p[i];
            p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
    return norm;
}

}  // namespace hart::train
