#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hart/corpus/blocks.hpp"
#include "hart/corpus/corpus.hpp"
#include "hart/corpus/vocabulary.hpp"
#include "hart/model/transformer.hpp"

namespace hart::model {

// How a user's blocks are chained.
//   full          U_i = tanh(W_U U_{i-1} + W_H pool(H^E_i)); block i sees U_{i-1}
//   no_history    every block is read with U0 alone; callers pass only the
//                 current document, so no earlier context exists
//   frozen_state  every block sees U0 (a static user state)
//   no_recurrence every block sees U0 and no state is carried forward, while
//                 all blocks of a user still share one backward pass
enum class RecurrenceMode { full, no_history, frozen_state, no_recurrence };

std::string_view mode_name(RecurrenceMode mode);
RecurrenceMode parse_mode(std::string_view name);

struct UserState {
    num::Tensor u;  // [1 x d]
    std::size_t block_index = 0;
};

enum class InitMode { zeros, corpus_average };

// zeros: the zero vector. corpus_average: mean over every non-PAD token of the
// sample of the extract-layer output, from the plain transformer (one block
// per segmented block of each sample user).
UserState init_user_state(InitMode mode, const Model& m,
                          const corpus::UserCorpus* sample = nullptr,
                          const corpus::Vocabulary* vocab = nullptr);

// Masked mean over non-PAD rows of H^E ([T x d] -> [1 x d]).
num::Var pool_extract(num::Tape& t, num::Var hidden, std::span<const std::uint8_t> mask);

// tanh(W_U u_prev + W_H pooled) with row vectors.
num::Var update_user_state(num::Tape& t, const Model& m, num::Var u_prev, num::Var pooled);

// H_in * Wq + u * Wq_user + bq, u broadcast to every row. Equal to
// [H_in ; u] * [Wq ; Wq_user] + bq.
num::Var user_conditioned_query(num::Tape& t, num::Var h_in, num::Var u_prev, num::Var wq,
                                num::Var wq_user, num::Var bias);

struct BlockResult {
    std::size_t block_index = 0;  // index into BlockSequence::blocks
    BlockForward forward;
    num::Var state_in;   // U_{i-1} that conditioned this block
    num::Var state_out;  // state after this block (== state_in unless mode is full)
};

struct SequenceForward {
    std::vector<BlockResult> blocks;   // non-PAD blocks only, in order
    std::vector<num::Var> trajectory;  // U_0, then one entry per non-PAD block
};

SequenceForward forward_blocks(num::Tape& t, const Model& m, const corpus::BlockSequence& seq,
                               RecurrenceMode mode, const ForwardOptions& opts = {});

// Several users on one tape; each user's chain is independent.
std::vector<SequenceForward> forward_batch(num::Tape& t, const Model& m,
                                           std::span<const corpus::BlockSequence> batch,
                                           RecurrenceMode mode, const ForwardOptions& opts = {});

}  // namespace hart::model
