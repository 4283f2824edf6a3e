#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hart/corpus/split.hpp"
#include "hart/eval/perplexity.hpp"
#include "hart/finetune/finetune.hpp"
#include "hart/finetune/tasks.hpp"
#include "hart/model/config.hpp"
#include "hart/train/pretrain.hpp"

namespace hart::cli {

// Bad configuration or input supplied by the operator (exit code 1).
class UserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Experiment file format: "key = value" lines, "[section]" headers, '#'
// comments, optional double quotes around values. Keys become
// "section.key" (top-level keys have no prefix).
std::map<std::string, std::string> parse_config_text(std::string_view text);

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "out";

    struct Paths {
        std::filesystem::path corpus, vocab, checkpoint, labels, train, dev, baseline;
    } paths;

    std::string task = "lm";  // gen-data: lm | document | user
    corpus::SyntheticConfig data;
    finetune::DocumentTaskConfig doc_task;  // history field mirrors `data`
    double task_dev_fraction = 0.1;
    double task_test_fraction = 0.2;

    corpus::SplitFractions split;
    std::size_t min_count = 1;

    model::ModelConfig model;
    train::TrainConfig train;
    train::InstanceKind instances = train::InstanceKind::user_blocks;

    finetune::FinetuneConfig finetune;
    finetune::DocMode doc_mode = finetune::DocMode::full;
    finetune::FreezePolicy freeze = finetune::FreezePolicy::recurrence_only;

    std::size_t history_blocks = 0;
    std::vector<std::size_t> sweep_ks{1, 2, 4};
    model::RecurrenceMode eval_mode = model::RecurrenceMode::full;
    std::size_t n_resamples = 10000;
    std::string test = "permutation";
    double reliability = 1.0;
    std::string eval_split = "test";
    eval::PairedScoring paired_scoring = eval::PairedScoring::word_conditional;
    std::string variant;  // ablate: no_recurrence | not_pretrained | no_history | frozen

    std::map<std::string, std::string> values;  // every key after overrides
    std::string hash;  // FNV-1a of the canonical text, paths and out_dir excluded
};

// All known keys with their defaults, as "key = value" text.
std::string default_config_text();

// Reads `file` (if any), applies "key=value" overrides in order, validates
// and fills the typed fields. Unknown keys and bad values throw UserError
// naming the key.
ExperimentConfig load_experiment(const std::optional<std::filesystem::path>& file,
                                 const std::vector<std::string>& overrides);

// "key=value\n" lines in key order.
std::string canonical_text(const std::map<std::string, std::string>& values);

}  // namespace hart::cli
