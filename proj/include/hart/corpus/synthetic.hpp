#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hart/corpus/corpus.hpp"

namespace hart::corpus {

// Generator for user corpora with a per-user latent style: each token comes
// from the user's preferred subvocabulary with probability `bias`, otherwise
// uniformly from the remaining words. With bias == subvocab_size / vocab_size
// every word is equally likely and the corpus carries no user signal.
struct SyntheticConfig {
    std::size_t n_users = 100;
    std::size_t messages_min = 20;
    std::size_t messages_max = 40;
    std::size_t tokens_min = 3;
    std::size_t tokens_max = 8;
    std::size_t vocab_size = 200;     // word types w0 .. w{vocab_size-1}
    std::size_t subvocab_size = 20;
    double bias = 0.85;
    // Per-user bias drawn uniformly from [bias, bias_max]; bias_max <= bias
    // means every user uses `bias`.
    double bias_max = 0.0;
    // 0: every user draws an independent subvocabulary. k > 0: k shared
    // subvocabularies ("styles"), user i gets style i mod k.
    std::size_t n_styles = 0;
    std::uint64_t seed = 1;
    std::string user_prefix = "u";
    std::int64_t start_time = 1'600'000'000;

    void validate() const;
};

struct UserLatent {
    std::string user_id;
    double bias = 0.0;
    std::size_t style = 0;
    std::vector<int> subvocab;  // word indices, ascending
};

struct SyntheticCorpus {
    UserCorpus corpus;
    std::vector<UserLatent> latents;  // aligned with corpus.users()
    std::vector<std::vector<int>> styles;
};

std::string synthetic_word(std::size_t index);

// Deterministic given cfg (including seed).
SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg);

// Per-user fraction of generated tokens that fall in the user's subvocabulary.
std::vector<double> subvocab_rates(const SyntheticCorpus& data);

}  // namespace hart::corpus
