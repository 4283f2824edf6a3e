#include "hart/corpus/blocks.hpp"

#include <stdexcept>

namespace hart::corpus {

std::size_t Block::num_real_tokens() const {
    std::size_t n = 0;
    for (auto m : attention_mask) n += m;
    return n;
}

BlockSequence segment_into_blocks(std::string user_id,
                                  std::span<const std::vector<int>> messages,
                                  const SegmentOptions& opts) {
    if (opts.block_size < 2) throw std::invalid_argument("block_size must be >= 2");
    if (opts.max_blocks < 1) throw std::invalid_argument("max_blocks must be >= 1");
    if (messages.empty()) {
        throw std::invalid_argument("cannot segment an empty message list for user '" +
                                    user_id + "'");
    }

    BlockSequence seq;
    seq.user_id = std::move(user_id);
    seq.block_size = opts.block_size;
    seq.num_messages = messages.size();

    Block cur;
    auto flush = [&] {
        seq.blocks.push_back(std::move(cur));
        cur = Block{};
    };
    // Returns false once the block budget is exhausted.
    auto room = [&] {
        if (cur.token_ids.size() == opts.block_size) {
            flush();
            if (seq.blocks.size() == opts.max_blocks) return false;
        }
        return true;
    };

    bool full = false;
    for (std::size_t mi = 0; mi < messages.size() && !full; ++mi) {
        if (mi > 0) {
            if (!room()) {
                full = true;
                break;
            }
            cur.token_ids.push_back(Vocabulary::kInsep);
            cur.attention_mask.push_back(1);
        }
        const auto& msg = messages[mi];
        std::size_t k = 0;
        while (k < msg.size()) {
            if (!room()) {
                full = true;
                break;
            }
            MessageSpan span{mi, cur.token_ids.size(), cur.token_ids.size(), k};
            while (k < msg.size() && cur.token_ids.size() < opts.block_size) {
                cur.token_ids.push_back(msg[k++]);
                cur.attention_mask.push_back(1);
            }
            span.end = cur.token_ids.size();
            cur.spans.push_back(span);
        }
    }
    if (!cur.token_ids.empty()) {
        if (seq.blocks.size() < opts.max_blocks) {
            flush();
        } else {
            full = true;
        }
    }
    seq.truncated = full;

    for (auto& b : seq.blocks) {
        while (b.token_ids.size() < opts.block_size) {
            b.token_ids.push_back(Vocabulary::kPad);
            b.attention_mask.push_back(0);
        }
    }
    seq.num_nonpad_blocks = seq.blocks.size();
    if (opts.pad_to_max) {
        while (seq.blocks.size() < opts.max_blocks) {
            Block pad;
            pad.token_ids.assign(opts.block_size, Vocabulary::kPad);
            pad.attention_mask.assign(opts.block_size, 0);
            pad.is_pad_block = true;
            seq.blocks.push_back(std::move(pad));
        }
    }
    return seq;
}

BlockSequence segment_into_blocks(const UserRecord& user, const Vocabulary& vocab,
                                  const SegmentOptions& opts) {
    std::vector<std::vector<int>> ids;
    ids.reserve(user.messages.size());
    for (const auto& m : user.messages) ids.push_back(vocab.encode(m.text));
    return segment_into_blocks(user.user_id, ids, opts);
}

std::vector<std::string> detokenize(const BlockSequence& seq, const Vocabulary& vocab) {
    std::vector<std::string> out(1);
    bool first_word = true;
    for (const auto& b : seq.blocks) {
        if (b.is_pad_block) continue;
        for (std::size_t i = 0; i < b.size(); ++i) {
            if (!b.attention_mask[i]) continue;
            const int id = b.token_ids[i];
            if (id == Vocabulary::kInsep) {
                out.emplace_back();
                first_word = true;
                continue;
            }
            if (!first_word) out.back() += ' ';
            out.back() += vocab.token(id);
            first_word = false;
        }
    }
    return out;
}

}  // namespace hart::corpus
