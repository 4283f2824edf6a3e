#pragma once

#include <cstdint>
#include <vector>

#include "hart/model/config.hpp"
#include "hart/numerics/params.hpp"

namespace hart::model {

using num::ParamId;

struct LayerParams {
    ParamId ln1_g, ln1_b;
    ParamId wq, bq, wk, bk, wv, bv;  // [d x d] applied as H * W
    ParamId wo, bo;
    ParamId ln2_g, ln2_b;
    ParamId w_fc, b_fc;      // [d x r*d]
    ParamId w_proj, b_proj;  // [r*d x d]
};

// Extra weights of the user-state pathway. The extended query weight of the
// insert layer is the vertical stack [layers[insert-1].wq ; wq_user]
// ([2d x d]) so the hidden half is the layer's own query weight.
struct RecurrenceParams {
    ParamId w_u;      // [d x d], applied as W_U * u
    ParamId w_h;      // [d x d], applied as W_H * pooled
    ParamId u0;       // [1 x d]
    ParamId wq_user;  // [d x d]
};

struct Model {
    ModelConfig config;
    num::ParameterSet params;
    ParamId wte;  // [vocab x d], tied with the output projection
    ParamId wpe;  // [block_size x d]
    std::vector<LayerParams> layers;
    ParamId lnf_g, lnf_b;
    RecurrenceParams hart;

    const LayerParams& insert_layer() const { return layers.at(config.insert_layer - 1); }

    // [2d x d] copy of the extended query weight, for inspection.
    num::Tensor extended_query_weight() const;

    // Ids of W_U, W_H, the extended query weight (both halves) and its bias.
    std::vector<ParamId> recurrence_param_ids() const;

    // Zeroes W_U, W_H and the user half of the extended query weight.
    void zero_user_pathway();
};

// Normal(0, 0.02) weights, unit layer-norm gains, zero biases, U0 = 0 and
// frozen. Residual output projections are scaled by 1/sqrt(2 * n_layers).
Model init_model(const ModelConfig& config, std::uint64_t seed);

// Rebinds the named ids of a model whose ParameterSet was loaded from disk.
Model bind_model(const ModelConfig& config, num::ParameterSet params);

}  // namespace hart::model
