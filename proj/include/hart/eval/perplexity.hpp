#pragma once

#include <span>
#include <string>
#include <vector>

#include "hart/corpus/blocks.hpp"
#include "hart/model/recurrence.hpp"
#include "hart/train/loss.hpp"

namespace hart::eval {

struct TokenNll {
    std::size_t block = 0;     // index into the sequence's blocks
    std::size_t position = 0;  // position of the predicted token
    train::TargetKey key;
    double nll = 0.0;
    // -log P(token | next token is not INSEP); equals nll for separator targets.
    double word_nll = 0.0;
};

// Per-target NLL of one sequence, in evaluation mode, following the training
// target convention.
std::vector<TokenNll> score_tokens(const model::Model& m, const corpus::BlockSequence& seq,
                                   model::RecurrenceMode mode);

// The first k non-PAD blocks (all of them when k == 0), PAD blocks dropped.
corpus::BlockSequence cap_blocks(const corpus::BlockSequence& seq, std::size_t k);

struct PerplexityResult {
    double nll = 0.0;  // summed
    std::size_t tokens = 0;
    double ppl = 0.0;
    std::vector<std::string> users;
    std::vector<double> user_nll;  // summed per user
    std::vector<std::size_t> user_tokens;
    double mean_nll() const { return nll / static_cast<double>(tokens); }
    // Per-user mean NLL, for paired tests.
    std::vector<double> user_mean_nll() const;
};

// exp(total NLL / total targets), token-weighted across users. Each user is
// read with at most `history_blocks` blocks (0 = all). Throws when nothing is
// scored.
PerplexityResult perplexity(const model::Model& m, std::span<const corpus::BlockSequence> data,
                            model::RecurrenceMode mode, std::size_t history_blocks = 0);

// The text before '#' of an instance id (per-message instances are named
// "<user>#<index>").
std::string base_user(const std::string& instance_id);

// joint: the model's probability of the word. word_conditional: renormalized
// over non-separator tokens, so models that place message boundaries
// differently are compared on word choice alone.
enum class PairedScoring { joint, word_conditional };

struct PairedPerplexity {
    PerplexityResult a;
    PerplexityResult b;
};

// Scores two segmentations of the same users and keeps only message tokens
// (keyed by user, message and offset) that are targets under both, so the
// two perplexities cover identical tokens. Separator targets are excluded.
PairedPerplexity compare_perplexity(const model::Model& model_a,
                                    std::span<const corpus::BlockSequence> data_a,
                                    model::RecurrenceMode mode_a, const model::Model& model_b,
                                    std::span<const corpus::BlockSequence> data_b,
                                    model::RecurrenceMode mode_b,
                                    PairedScoring scoring = PairedScoring::joint);

struct SweepRow {
    std::size_t k = 0;
    PerplexityResult result;
};

// For every user the scored block is fixed at block K-1 (K = the largest k,
// or the user's last block if fewer exist); with history size k it is read
// after the preceding k-1 blocks. Every row scores the same tokens.
std::vector<SweepRow> history_sweep(const model::Model& m,
                                    std::span<const corpus::BlockSequence> data,
                                    std::span<const std::size_t> ks,
                                    model::RecurrenceMode mode = model::RecurrenceMode::full);

// Plot-ready "k<TAB>perplexity" lines.
std::string sweep_table(const std::vector<SweepRow>& rows);

}  // namespace hart::eval
