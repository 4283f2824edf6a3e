#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hart/model/params.hpp"
#include "hart/numerics/ops.hpp"

namespace hart::model {

struct ForwardOptions {
    bool training = false;          // enables dropout
    num::Rng* rng = nullptr;        // required when training with dropout > 0
};

struct BlockForward {
    num::Var embeddings;              // token + position embeddings [T x d]
    std::vector<num::Var> hidden;     // hidden[l-1] = output of layer l
    num::Var logits;                  // [T x vocab]
};

// fill[i*T + j] = 1 where query i may not look at key j: j > i or key j is
// PAD. A query with no visible key is allowed to see itself.
std::vector<std::uint8_t> causal_fill_mask(std::span<const std::uint8_t> key_mask);

// Scaled dot-product attention per head over column slices of q/k/v
// ([T x d] each), heads concatenated back to [T x d]. The output projection
// is applied by the caller.
num::Var attention(num::Tape& t, num::Var q, num::Var k, num::Var v,
                   std::span<const std::uint8_t> fill_mask, std::size_t n_heads);

// One block through the stack. With `user_state` ([1 x d]) the insert layer's
// query becomes H*Wq + u*Wq_user + bq; without it the model is a plain causal
// LM. Position ids restart at 0 for every block.
BlockForward forward_block(num::Tape& t, const Model& m, std::span<const int> tokens,
                           std::span<const std::uint8_t> attention_mask,
                           std::optional<num::Var> user_state, const ForwardOptions& opts = {});

struct PlainOutput {
    num::Tensor logits;
    std::vector<num::Tensor> hidden;
};

// Evaluation-mode plain transformer on one block (no user state).
PlainOutput forward_block_plain(const Model& m, std::span<const int> tokens,
                                std::span<const std::uint8_t> attention_mask);

}  // namespace hart::model
