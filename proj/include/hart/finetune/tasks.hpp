#pragma once

#include <vector>

#include "hart/corpus/synthetic.hpp"
#include "hart/finetune/labeled.hpp"

namespace hart::finetune {

// Document classification with a latent user class. History comes from the
// synthetic generator with n_styles = number of classes; each labeled message
// draws `labeled_bias` of its tokens from the user's class subvocabulary and
// the rest uniformly from the other words. The label is the user's class,
// which is also the subvocabulary the labeled message leans towards.
struct DocumentTaskConfig {
    corpus::SyntheticConfig history;
    std::size_t docs_per_user = 1;
    std::size_t labeled_tokens_min = 4;
    std::size_t labeled_tokens_max = 8;
    double labeled_bias = 0.3;
    double dev_fraction = 0.1;   // of users
    double test_fraction = 0.2;  // of users
    void validate() const;
};

struct SyntheticTask {
    corpus::SyntheticCorpus data;     // history / message corpus with latents
    std::vector<LabeledLine> labels;  // labeled file content
};

SyntheticTask generate_document_task(const DocumentTaskConfig& cfg);

// User-level regression: target = the user's generator bias. Use a shared
// subvocabulary (n_styles = 1) with bias < bias_max so targets vary.
struct UserTaskConfig {
    corpus::SyntheticConfig corpus;
    double dev_fraction = 0.1;
    double test_fraction = 0.2;
    void validate() const;
};

SyntheticTask generate_user_task(const UserTaskConfig& cfg);

}  // namespace hart::finetune
