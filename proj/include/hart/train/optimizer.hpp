#pragma once

#include <cstdint>
#include <vector>

#include "hart/numerics/params.hpp"

namespace hart::train {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::size_t warmup_steps = 0;  // linear ramp from lr/warmup to lr
    double clip_norm = 1.0;        // global gradient norm cap; <= 0 disables
};

struct OptimizerState {
    std::uint64_t step = 0;
    std::vector<num::Tensor> m;
    std::vector<num::Tensor> v;
    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// Adam with decoupled weight decay. Decay applies to matrices (rank >= 2)
// only; biases, gains and vectors are not decayed. Frozen parameters are left
// untouched, bit for bit.
class AdamW {
public:
    AdamW(const num::ParameterSet& params, AdamWConfig cfg);
    AdamW(AdamWConfig cfg, OptimizerState state) : cfg_(cfg), state_(std::move(state)) {}

    // Clips `grads` in place, then updates. Returns the pre-clip global norm.
    double step(num::ParameterSet& params, num::Gradients& grads);

    double current_lr() const;
    const OptimizerState& state() const { return state_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    OptimizerState state_;
};

}  // namespace hart::train
