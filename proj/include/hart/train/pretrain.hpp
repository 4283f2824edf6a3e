#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hart/corpus/blocks.hpp"
#include "hart/corpus/corpus.hpp"
#include "hart/model/recurrence.hpp"
#include "hart/train/optimizer.hpp"

namespace hart::train {

enum class InstanceKind {
    user_blocks,  // one instance per user: the user's messages in blocks
    per_message,  // one instance per message, no history (plain-LM baseline);
                  // INSEP closes every message but the user's last
};

std::vector<corpus::BlockSequence> build_instances(const corpus::UserCorpus& corpus,
                                                   const corpus::Vocabulary& vocab,
                                                   std::size_t block_size,
                                                   std::size_t max_blocks, InstanceKind kind,
                                                   bool pad_to_max = true);

struct TrainConfig {
    AdamWConfig optim;
    std::size_t batch_size = 8;  // users (instances) per step
    std::size_t epochs = 5;
    std::size_t patience = 2;    // dev evaluations without improvement before stopping
    std::uint64_t seed = 1;
    model::RecurrenceMode mode = model::RecurrenceMode::full;
    std::size_t max_steps = 0;   // 0 = no cap

    void validate() const;
};

struct MetricsRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double train_nll = 0.0;
    double dev_nll = 0.0;
    double ppl = 0.0;  // exp(dev_nll)
};

struct TrainResult {
    model::Model model;  // parameters at the best dev NLL
    OptimizerState optimizer;
    std::vector<MetricsRecord> log;
    double best_dev_nll = 0.0;
    std::size_t best_epoch = 0;
    std::size_t steps = 0;
    bool early_stopped = false;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NllTotals {
    double nll = 0.0;
    std::size_t tokens = 0;
    double mean() const { return tokens ? nll / static_cast<double>(tokens) : 0.0; }
};

// Token-weighted NLL in evaluation mode (no dropout).
NllTotals evaluate_nll(const model::Model& m, std::span<const corpus::BlockSequence> data,
                       model::RecurrenceMode mode);

// Forward + backward for one instance, gradients added into `grads`.
// Returns the summed NLL and target count.
NllTotals accumulate_gradients(const model::Model& m, const corpus::BlockSequence& seq,
                               model::RecurrenceMode mode, const model::ForwardOptions& opts,
                               num::Gradients& grads);

// Minimizes the HuLM objective; after each epoch evaluates dev NLL, keeps the
// best parameters and stops after `patience` non-improving epochs.
TrainResult pretrain(model::Model init, const TrainConfig& cfg,
                     std::span<const corpus::BlockSequence> train,
                     std::span<const corpus::BlockSequence> dev,
                     const std::function<void(const MetricsRecord&)>& on_record = {});

}  // namespace hart::train
