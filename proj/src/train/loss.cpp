#include "hart/train/loss.hpp"

#include <stdexcept>
#include <string>

#include "hart/corpus/vocabulary.hpp"

namespace hart::train {

std::vector<int> block_targets(const corpus::Block& block) {
    const std::size_t n = block.size();
    std::vector<int> tg(n, -1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (block.attention_mask[i] && block.attention_mask[i + 1]) tg[i] = block.token_ids[i + 1];
    }
    return tg;
}

TargetKey target_key(const corpus::Block& block, std::size_t position) {
    if (block.token_ids.at(position) == corpus::Vocabulary::kInsep) {
        return TargetKey{0, 0, true};
    }
    for (const auto& s : block.spans) {
        if (position >= s.start && position < s.end) {
            return TargetKey{s.message, s.offset + (position - s.start), false};
        }
    }
    throw std::invalid_argument("target_key: position " + std::to_string(position) +
                                " is not inside any message span");
}

LossResult hulm_loss(num::Tape& t, std::span<const num::Var> block_logits,
                     std::span<const corpus::Block> blocks) {
    if (block_logits.size() != blocks.size()) {
        throw std::invalid_argument("hulm_loss: " + std::to_string(block_logits.size()) +
                                    " logits for " + std::to_string(blocks.size()) + " blocks");
    }
    if (blocks.empty()) throw std::invalid_argument("hulm_loss: no blocks");
    LossResult r;
    std::vector<num::Var> parts;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto& lv = t.value(block_logits[b]);
        if (lv.rows() != blocks[b].size()) {
            throw std::invalid_argument("hulm_loss: logits rows " + std::to_string(lv.rows()) +
                                        " vs block size " + std::to_string(blocks[b].size()));
        }
        const std::vector<int> tg = block_targets(blocks[b]);
        for (int x : tg) r.tokens += x >= 0;
        parts.push_back(num::cross_entropy_sum(t, block_logits[b], tg));
    }
    r.total = parts.size() == 1 ? parts[0] : num::sum(t, num::concat_rows(t, parts));
    r.mean = r.tokens ? num::scale(t, r.total, 1.0 / static_cast<double>(r.tokens)) : r.total;
    return r;
}

LossResult hulm_loss(num::Tape& t, const model::SequenceForward& fwd,
                     const corpus::BlockSequence& seq) {
    std::vector<num::Var> logits;
    std::vector<corpus::Block> blocks;
    for (const auto& br : fwd.blocks) {
        logits.push_back(br.forward.logits);
        blocks.push_back(seq.blocks.at(br.block_index));
    }
    return hulm_loss(t, logits, blocks);
}

std::size_t count_targets(const corpus::BlockSequence& seq) {
    std::size_t n = 0;
    for (const auto& b : seq.blocks) {
        if (b.is_pad_block) continue;
        const std::size_t real = b.num_real_tokens();
        n += real > 0 ? real - 1 : 0;
    }
    return n;
}

}  // namespace hart::train
