#include "hart/model/recurrence.hpp"

#include <stdexcept>
#include <string>

namespace hart::model {

using num::Tape;
using num::Var;

std::string_view mode_name(RecurrenceMode mode) {
    switch (mode) {
        case RecurrenceMode::full: return "full";
        case RecurrenceMode::no_history: return "no_history";
        case RecurrenceMode::frozen_state: return "frozen_state";
        case RecurrenceMode::no_recurrence: return "no_recurrence";
    }
    return "full";
}

RecurrenceMode parse_mode(std::string_view name) {
    if (name == "full") return RecurrenceMode::full;
    if (name == "no_history") return RecurrenceMode::no_history;
    if (name == "frozen_state" || name == "frozen") return RecurrenceMode::frozen_state;
    if (name == "no_recurrence") return RecurrenceMode::no_recurrence;
    throw std::invalid_argument("unknown recurrence mode '" + std::string(name) + "'");
}

UserState init_user_state(InitMode mode, const Model& m, const corpus::UserCorpus* sample,
                          const corpus::Vocabulary* vocab) {
    const std::size_t d = m.config.d_model;
    UserState s{num::Tensor({1, d}), 0};
    if (mode == InitMode::zeros) return s;
    if (!sample || !vocab || sample->empty()) {
        throw std::invalid_argument("corpus_average user-state init needs a sample corpus");
    }
    corpus::SegmentOptions so{m.config.block_size, m.config.max_blocks, false};
    std::size_t count = 0;
    for (const auto& user : sample->users()) {
        if (user.messages.empty()) continue;
        const auto seq = corpus::segment_into_blocks(user, *vocab, so);
        for (std::size_t b = 0; b < seq.num_nonpad_blocks; ++b) {
            const auto& blk = seq.blocks[b];
            const PlainOutput out = forward_block_plain(m, blk.token_ids, blk.attention_mask);
            const num::Tensor& h = out.hidden[m.config.extract_layer - 1];
            for (std::size_t i = 0; i < blk.size(); ++i) {
                if (!blk.attention_mask[i]) continue;
                for (std::size_t j = 0; j < d; ++j) s.u[j] += h.at(i, j);
                ++count;
            }
        }
    }
    if (count == 0) throw std::invalid_argument("corpus_average: sample has no tokens");
    for (std::size_t j = 0; j < d; ++j) s.u[j] /= static_cast<double>(count);
    return s;
}

Var pool_extract(Tape& t, Var hidden, std::span<const std::uint8_t> mask) {
    return num::masked_mean_rows(t, hidden, mask);
}

Var update_user_state(Tape& t, const Model& m, Var u_prev, Var pooled) {
    const Var a = num::matmul_nt(t, u_prev, t.param(m.params, m.hart.w_u));
    const Var b = num::matmul_nt(t, pooled, t.param(m.params, m.hart.w_h));
    return num::tanh(t, num::add(t, a, b));
}

Var user_conditioned_query(Tape& t, Var h_in, Var u_prev, Var wq, Var wq_user, Var bias) {
    const Var q = num::matmul(t, h_in, wq);
    const Var uq = num::matmul(t, u_prev, wq_user);
    return num::add_row(t, num::add_row(t, q, uq), bias);
}

SequenceForward forward_blocks(Tape& t, const Model& m, const corpus::BlockSequence& seq,
                               RecurrenceMode mode, const ForwardOptions& opts) {
    if (seq.blocks.empty() || seq.num_nonpad_blocks == 0) {
        throw std::invalid_argument("forward_blocks: sequence for user '" + seq.user_id +
                                    "' has no non-PAD blocks");
    }
    SequenceForward out;
    const Var u0 = t.param(m.params, m.hart.u0);
    out.trajectory.push_back(u0);
    Var state = u0;
    for (std::size_t b = 0; b < seq.blocks.size(); ++b) {
        const corpus::Block& blk = seq.blocks[b];
        if (blk.is_pad_block) continue;
        BlockResult r;
        r.block_index = b;
        r.state_in = mode == RecurrenceMode::full ? state : u0;
        r.forward = forward_block(t, m, blk.token_ids, blk.attention_mask, r.state_in, opts);
        if (mode == RecurrenceMode::full) {
            const Var pooled = pool_extract(t, r.forward.hidden[m.config.extract_layer - 1],
                                            blk.attention_mask);
            state = update_user_state(t, m, state, pooled);
            r.state_out = state;
        } else {
            r.state_out = u0;
        }
        out.trajectory.push_back(r.state_out);
        out.blocks.push_back(r);
    }
    return out;
}

std::vector<SequenceForward> forward_batch(Tape& t, const Model& m,
                                           std::span<const corpus::BlockSequence> batch,
                                           RecurrenceMode mode, const ForwardOptions& opts) {
    std::vector<SequenceForward> out;
    out.reserve(batch.size());
    for (const auto& seq : batch) out.push_back(forward_blocks(t, m, seq, mode, opts));
    return out;
}

}  // namespace hart::model
