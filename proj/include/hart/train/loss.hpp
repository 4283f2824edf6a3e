#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hart/corpus/blocks.hpp"
#include "hart/model/recurrence.hpp"

namespace hart::train {

// Next-token targets inside one block: position i predicts token i+1 when
// both are non-PAD. The last position has no in-block target. INSEP is a
// target; PAD never is. -1 marks "no target".
std::vector<int> block_targets(const corpus::Block& block);

// Where a predicted token came from, for like-for-like comparisons across
// segmentations. INSEP targets carry is_separator = true and no message.
struct TargetKey {
    std::size_t message = 0;
    std::size_t offset = 0;  // token index inside the message
    bool is_separator = false;
};

// Key of the token at `position` of `block` (must be non-PAD).
TargetKey target_key(const corpus::Block& block, std::size_t position);

struct LossResult {
    num::Var total;  // summed NLL
    num::Var mean;   // total / tokens (equals total when tokens == 0)
    std::size_t tokens = 0;
};

// Token-weighted HuLM objective over every non-PAD block of one user.
LossResult hulm_loss(num::Tape& t, const model::SequenceForward& fwd,
                     const corpus::BlockSequence& seq);

// Same, from explicit per-block logits (rows = block_size) and blocks.
LossResult hulm_loss(num::Tape& t, std::span<const num::Var> block_logits,
                     std::span<const corpus::Block> blocks);

// Σ over non-PAD blocks of (non-PAD positions - 1).
std::size_t count_targets(const corpus::BlockSequence& seq);

}  // namespace hart::train
