#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hart/corpus/corpus.hpp"
#include "hart/corpus/vocabulary.hpp"

namespace hart::corpus {

// Tokens of one message that landed in a block: positions [start, end) of the
// block hold tokens [offset, offset + end - start) of message `message`.
struct MessageSpan {
    std::size_t message = 0;
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t offset = 0;
    friend bool operator==(const MessageSpan&, const MessageSpan&) = default;
};

struct Block {
    std::vector<int> token_ids;
    std::vector<std::uint8_t> attention_mask;  // 0 exactly at PAD positions
    std::vector<MessageSpan> spans;
    bool is_pad_block = false;

    std::size_t size() const { return token_ids.size(); }
    std::size_t num_real_tokens() const;
    friend bool operator==(const Block&, const Block&) = default;
};

struct BlockSequence {
    std::string user_id;
    std::size_t block_size = 0;
    std::vector<Block> blocks;
    std::size_t num_nonpad_blocks = 0;
    std::size_t num_messages = 0;  // messages supplied (before truncation)
    bool truncated = false;
    friend bool operator==(const BlockSequence&, const BlockSequence&) = default;
};

struct SegmentOptions {
    std::size_t block_size = 0;
    std::size_t max_blocks = 0;
    // Fill with all-PAD blocks up to max_blocks (batched training layout).
    bool pad_to_max = true;
};

// Lays messages out back to back with one INSEP between consecutive messages,
// PAD-fills the last partial block, keeps the earliest max_blocks blocks.
// Messages longer than a block continue into the next one.
BlockSequence segment_into_blocks(std::string user_id,
                                  std::span<const std::vector<int>> messages,
                                  const SegmentOptions& opts);

BlockSequence segment_into_blocks(const UserRecord& user, const Vocabulary& vocab,
                                  const SegmentOptions& opts);

// Message texts recovered from the non-PAD content (INSEP splits messages).
std::vector<std::string> detokenize(const BlockSequence& seq, const Vocabulary& vocab);

}  // namespace hart::corpus
