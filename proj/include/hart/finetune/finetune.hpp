#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hart/corpus/blocks.hpp"
#include "hart/corpus/vocabulary.hpp"
#include "hart/finetune/labeled.hpp"
#include "hart/model/recurrence.hpp"
#include "hart/train/optimizer.hpp"

namespace hart::finetune {

// How a labeled document is read.
//   full           history blocks then the document, state carried (all weights tuned)
//   no_history     the document alone
//   no_recurrence  the document sees U0 only; history cannot reach it
//   frozen_repr    as full, but the extract-layer output feeds the head and
//                  every model weight is frozen
enum class DocMode { full, no_history, no_recurrence, frozen_repr };
std::string_view doc_mode_name(DocMode mode);
DocMode parse_doc_mode(std::string_view name);

enum class FreezePolicy { recurrence_only, all, none };
std::string_view freeze_name(FreezePolicy policy);
FreezePolicy parse_freeze(std::string_view name);

struct FinetuneConfig {
    train::AdamWConfig optim;
    std::size_t batch_size = 8;
    std::size_t epochs = 5;
    std::size_t patience = 2;
    std::uint64_t seed = 1;
    std::size_t max_blocks = 4;  // block cap for training and evaluation instances
};

// Head parameters: layer norm over the representation, then a linear map.
// Names: "ln.g", "ln.b", "w" ([d x out]), "b" ([out]).
num::ParameterSet make_head(std::size_t d_model, std::size_t out_dim, std::uint64_t seed);

struct HeadIds {
    num::ParamId ln_g, ln_b, w, b;
};

// A model whose ParameterSet also carries the head (as "head.*" entries after
// the model's own parameters), so one tape and one optimizer cover both.
struct TaskModel {
    model::Model model;
    HeadIds head;
    std::size_t n_model_params = 0;
};

TaskModel attach_head(model::Model m, const num::ParameterSet& head);
model::Model detach_model(const TaskModel& tm);
num::ParameterSet detach_head(const TaskModel& tm);

// [1 x d] -> [1 x out]
num::Var apply_head(num::Tape& t, const TaskModel& tm, num::Var rep);

struct DocInstance {
    corpus::BlockSequence seq;
    std::size_t block = 0;     // block holding the document's last token
    std::size_t position = 0;  // that token's position in the block
    int label = 0;
};

// History messages first, then the document starting a fresh block. Throws if
// the block cap drops (part of) the document.
DocInstance build_document_instance(const LabeledDocument& doc, const corpus::Vocabulary& vocab,
                                    std::size_t block_size, std::size_t max_blocks, DocMode mode);

std::vector<DocInstance> build_document_instances(const LabeledDocumentSet& docs,
                                                  const corpus::Vocabulary& vocab,
                                                  std::size_t block_size, std::size_t max_blocks,
                                                  DocMode mode);

// [1 x d] hidden state at the document's last token.
num::Var document_representation(num::Tape& t, const model::Model& m, const DocInstance& inst,
                                 DocMode mode, const model::ForwardOptions& opts = {});

num::Var document_logits(num::Tape& t, const TaskModel& tm, const DocInstance& inst, DocMode mode,
                         const model::ForwardOptions& opts = {});

struct DocPrediction {
    int label = 0;                    // argmax of the head logits
    std::vector<double> probabilities;
};

std::vector<DocPrediction> predict_documents(const TaskModel& tm,
                                             std::span<const DocInstance> data, DocMode mode);

struct FinetuneRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_loss = 0.0;
};

struct FinetuneResult {
    TaskModel model;  // best dev loss
    std::vector<FinetuneRecord> log;
    double best_dev_loss = 0.0;
    std::size_t steps = 0;
};

// Cross-entropy on the document's last token. Model weights are all trainable
// except in frozen_repr mode; U0 stays frozen.
FinetuneResult finetune_document(const model::Model& pretrained, std::span<const DocInstance> train,
                                 std::span<const DocInstance> dev, std::size_t n_classes,
                                 const FinetuneConfig& cfg, DocMode mode,
                                 const std::function<void(const FinetuneRecord&)>& on_record = {});

struct UserInstance {
    corpus::BlockSequence seq;
    double target = 0.0;
};

std::vector<UserInstance> build_user_instances(const LabeledUserSet& users,
                                               const corpus::Vocabulary& vocab,
                                               std::size_t block_size, std::size_t max_blocks);

// Mean of U_i over the non-PAD blocks, [1 x d].
num::Var user_representation(num::Tape& t, const model::Model& m, const corpus::BlockSequence& seq,
                             const model::ForwardOptions& opts = {});

std::vector<double> predict_users(const TaskModel& tm, std::span<const UserInstance> data);

// Squared error on the head output. recurrence_only trains W_U, W_H, the
// extended query weight and its bias plus the head; all trains the head only;
// none trains everything but U0.
FinetuneResult finetune_user(const model::Model& pretrained, std::span<const UserInstance> train,
                             std::span<const UserInstance> dev, const FinetuneConfig& cfg,
                             FreezePolicy freeze,
                             const std::function<void(const FinetuneRecord&)>& on_record = {});

// Per-user prediction of a message-level model: the mean of its message
// predictions.
double baseline_user_predict(std::span<const double> message_predictions);

}  // namespace hart::finetune
