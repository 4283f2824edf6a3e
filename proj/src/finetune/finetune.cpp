#include "hart/finetune/finetune.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "hart/numerics/random.hpp"
#include "hart/train/pretrain.hpp"

namespace hart::finetune {

using num::Tape;
using num::Tensor;
using num::Var;

std::string_view doc_mode_name(DocMode mode) {
    switch (mode) {
        case DocMode::full: return "full";
        case DocMode::no_history: return "no_history";
        case DocMode::no_recurrence: return "no_recurrence";
        case DocMode::frozen_repr: return "frozen_repr";
    }
    return "full";
}

DocMode parse_doc_mode(std::string_view name) {
    if (name == "full") return DocMode::full;
    if (name == "no_history") return DocMode::no_history;
    if (name == "no_recurrence") return DocMode::no_recurrence;
    if (name == "frozen_repr" || name == "frozen") return DocMode::frozen_repr;
    throw std::invalid_argument("unknown document mode '" + std::string(name) + "'");
}

std::string_view freeze_name(FreezePolicy policy) {
    switch (policy) {
        case FreezePolicy::recurrence_only: return "recurrence_only";
        case FreezePolicy::all: return "all";
        case FreezePolicy::none: return "none";
    }
    return "none";
}

FreezePolicy parse_freeze(std::string_view name) {
    if (name == "recurrence_only") return FreezePolicy::recurrence_only;
    if (name == "all") return FreezePolicy::all;
    if (name == "none") return FreezePolicy::none;
    throw std::invalid_argument("unknown freeze policy '" + std::string(name) + "'");
}

num::ParameterSet make_head(std::size_t d_model, std::size_t out_dim, std::uint64_t seed) {
    if (d_model == 0 || out_dim == 0) throw std::invalid_argument("head dimensions must be > 0");
    num::Rng rng(seed);
    num::ParameterSet head;
    Tensor g({d_model});
    g.fill(1.0);
    head.add("ln.g", std::move(g));
    head.add("ln.b", Tensor({d_model}));
    Tensor w({d_model, out_dim});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, 0.02);
    head.add("w", std::move(w));
    head.add("b", Tensor({out_dim}));
    return head;
}

TaskModel attach_head(model::Model m, const num::ParameterSet& head) {
    TaskModel tm;
    tm.n_model_params = m.params.size();
    auto put = [&](std::string_view name) {
        const auto id = head.at(name);
        return m.params.add("head." + std::string(name), head.value(id), head.trainable(id));
    };
    tm.head.ln_g = put("ln.g");
    tm.head.ln_b = put("ln.b");
    tm.head.w = put("w");
    tm.head.b = put("b");
    if (m.params.value(tm.head.w).rows() != m.config.d_model) {
        throw std::invalid_argument("head input size does not match d_model");
    }
    tm.model = std::move(m);
    return tm;
}

model::Model detach_model(const TaskModel& tm) {
    num::ParameterSet ps;
    for (std::size_t i = 0; i < tm.n_model_params; ++i) {
        const num::ParamId id{i};
        ps.add(tm.model.params.name(id), tm.model.params.value(id), tm.model.params.trainable(id));
    }
    model::Model m = tm.model;
    m.params = std::move(ps);
    return m;
}

num::ParameterSet detach_head(const TaskModel& tm) {
    num::ParameterSet head;
    for (std::size_t i = tm.n_model_params; i < tm.model.params.size(); ++i) {
        const num::ParamId id{i};
        head.add(tm.model.params.name(id).substr(5), tm.model.params.value(id),
                 tm.model.params.trainable(id));
    }
    return head;
}

Var apply_head(Tape& t, const TaskModel& tm, Var rep) {
    const auto& P = tm.model.params;
    const Var n = num::layer_norm(t, rep, t.param(P, tm.head.ln_g), t.param(P, tm.head.ln_b),
                                  tm.model.config.ln_eps);
    return num::add_row(t, num::matmul(t, n, t.param(P, tm.head.w)), t.param(P, tm.head.b));
}

DocInstance build_document_instance(const LabeledDocument& doc, const corpus::Vocabulary& vocab,
                                    std::size_t block_size, std::size_t max_blocks, DocMode mode) {
    std::vector<std::vector<int>> history;
    // Without a carried state the history cannot influence the document, so
    // it is left out.
    if (mode == DocMode::full || mode == DocMode::frozen_repr) {
        for (const auto& m : doc.history) {
            auto ids = vocab.encode(m.text);
            if (!ids.empty()) history.push_back(std::move(ids));
        }
    }
    std::vector<std::vector<int>> body{vocab.encode(doc.message.text)};
    if (body[0].empty()) {
        throw std::invalid_argument("labeled document of user " + doc.user_id + " has no tokens");
    }
    const corpus::SegmentOptions uncapped{block_size, std::numeric_limits<std::size_t>::max() / 2,
                                          false};
    corpus::BlockSequence tail = corpus::segment_into_blocks(doc.user_id, body, uncapped);

    DocInstance inst;
    inst.label = doc.label;
    if (!history.empty()) {
        inst.seq = corpus::segment_into_blocks(doc.user_id, history, uncapped);
    } else {
        inst.seq.user_id = doc.user_id;
        inst.seq.block_size = block_size;
    }
    const std::size_t n_hist = history.size();
    for (auto& blk : tail.blocks) {
        for (auto& s : blk.spans) s.message = n_hist;
        inst.seq.blocks.push_back(std::move(blk));
    }
    inst.seq.num_nonpad_blocks = inst.seq.blocks.size();
    inst.seq.num_messages = n_hist + 1;
    if (inst.seq.blocks.size() > max_blocks) {
        throw std::invalid_argument("labeled document of user " + doc.user_id +
                                    " does not fit the block cap (" +
                                    std::to_string(inst.seq.blocks.size()) + " blocks > " +
                                    std::to_string(max_blocks) + ")");
    }
    inst.block = inst.seq.blocks.size() - 1;
    inst.position = inst.seq.blocks.back().num_real_tokens() - 1;
    return inst;
}

std::vector<DocInstance> build_document_instances(const LabeledDocumentSet& docs,
                                                  const corpus::Vocabulary& vocab,
                                                  std::size_t block_size, std::size_t max_blocks,
                                                  DocMode mode) {
    std::vector<DocInstance> out;
    out.reserve(docs.records.size());
    for (const auto& d : docs.records) {
        out.push_back(build_document_instance(d, vocab, block_size, max_blocks, mode));
    }
    return out;
}

namespace {

model::RecurrenceMode forward_mode(DocMode mode) {
    switch (mode) {
        case DocMode::full:
        case DocMode::frozen_repr: return model::RecurrenceMode::full;
        case DocMode::no_history: return model::RecurrenceMode::no_history;
        case DocMode::no_recurrence: return model::RecurrenceMode::no_recurrence;
    }
    return model::RecurrenceMode::full;
}

Var select_row(Tape& t, Var h, std::size_t row) {
    Tensor pick({1, t.value(h).rows()});
    pick[row] = 1.0;
    return num::matmul(t, t.constant(std::move(pick)), h);
}

// Shared loop: shuffled mini-batches, mean instance loss, per-epoch dev loss,
// best-dev snapshot with patience.
template <typename LossFn, typename DevFn>
FinetuneResult run_finetune(TaskModel tm, std::size_t n_train, const FinetuneConfig& cfg,
                            LossFn&& instance_loss, DevFn&& dev_loss,
                            const std::function<void(const FinetuneRecord&)>& on_record) {
    if (n_train == 0) throw std::invalid_argument("fine-tuning: empty training set");
    if (cfg.batch_size == 0) throw std::invalid_argument("fine-tuning: batch_size must be > 0");
    FinetuneResult res;
    train::AdamW opt(tm.model.params, cfg.optim);
    num::Rng rng(cfg.seed);
    num::Rng drop_rng = rng.fork(0xD0);
    const model::ForwardOptions fopts{tm.model.config.dropout > 0.0, &drop_rng};

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    TaskModel best_tm = tm;
    std::size_t bad = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t end = std::min(n_train, start + cfg.batch_size);
            num::Gradients grads(tm.model.params);
            for (std::size_t i = start; i < end; ++i) {
                Tape t(true);
                try {
                    const Var loss = instance_loss(t, tm, order[i], fopts);
                    const double v = t.value(loss)[0];
                    if (!std::isfinite(v)) throw num::NumericError("non-finite loss");
                    epoch_loss += v;
                    t.backward(loss, &grads);
                } catch (const num::NumericError& e) {
                    throw train::TrainingDiverged("fine-tuning diverged at epoch " +
                                                  std::to_string(epoch) + ": " + e.what());
                }
            }
            grads.scale(1.0 / static_cast<double>(end - start));
            try {
                opt.step(tm.model.params, grads);
            } catch (const std::runtime_error& e) {
                throw train::TrainingDiverged("fine-tuning diverged at step " +
                                              std::to_string(res.steps + 1) + ": " + e.what());
            }
            ++res.steps;
        }
        FinetuneRecord rec;
        rec.step = res.steps;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(n_train);
        const auto dl = dev_loss(tm);
        rec.dev_loss = dl ? *dl : rec.train_loss;
        res.log.push_back(rec);
        if (on_record) on_record(rec);
        if (rec.dev_loss < best) {
            best = rec.dev_loss;
            best_tm = tm;
            bad = 0;
        } else if (++bad > cfg.patience) {
            break;
        }
    }
    res.best_dev_loss = best;
    res.model = std::move(best_tm);
    return res;
}

Var doc_loss(Tape& t, const TaskModel& tm, const DocInstance& inst, DocMode mode,
             const model::ForwardOptions& opts) {
    const Var logits = document_logits(t, tm, inst, mode, opts);
    const int target[1] = {inst.label};
    return num::cross_entropy_sum(t, logits, target);
}

Var user_loss(Tape& t, const TaskModel& tm, const UserInstance& inst,
              const model::ForwardOptions& opts) {
    const Var pred = apply_head(t, tm, user_representation(t, tm.model, inst.seq, opts));
    const Var diff = num::sub(t, pred, t.constant(Tensor({1, 1}, inst.target)));
    return num::sum(t, num::mul(t, diff, diff));
}

}  // namespace

Var document_representation(Tape& t, const model::Model& m, const DocInstance& inst, DocMode mode,
                            const model::ForwardOptions& opts) {
    const auto fwd = model::forward_blocks(t, m, inst.seq, forward_mode(mode), opts);
    for (const auto& br : fwd.blocks) {
        if (br.block_index != inst.block) continue;
        const std::size_t layer =
            mode == DocMode::frozen_repr ? m.config.extract_layer : m.config.n_layers;
        return select_row(t, br.forward.hidden[layer - 1], inst.position);
    }
    throw std::logic_error("document block missing from forward pass");
}

Var document_logits(Tape& t, const TaskModel& tm, const DocInstance& inst, DocMode mode,
                    const model::ForwardOptions& opts) {
    return apply_head(t, tm, document_representation(t, tm.model, inst, mode, opts));
}

std::vector<DocPrediction> predict_documents(const TaskModel& tm, std::span<const DocInstance> data,
                                             DocMode mode) {
    std::vector<DocPrediction> out;
    out.reserve(data.size());
    for (const auto& inst : data) {
        Tape t(false);
        const Tensor logits = t.value(document_logits(t, tm, inst, mode));
        DocPrediction p;
        p.probabilities = num::softmax_rows(logits).values();
        p.label = 0;
        for (std::size_t c = 1; c < logits.numel(); ++c) {
            if (logits[c] > logits[static_cast<std::size_t>(p.label)]) p.label = static_cast<int>(c);
        }
        out.push_back(std::move(p));
    }
    return out;
}

FinetuneResult finetune_document(const model::Model& pretrained, std::span<const DocInstance> train,
                                 std::span<const DocInstance> dev, std::size_t n_classes,
                                 const FinetuneConfig& cfg, DocMode mode,
                                 const std::function<void(const FinetuneRecord&)>& on_record) {
    if (n_classes < 2) throw std::invalid_argument("document task needs at least 2 classes");
    for (const auto* set : {&train, &dev}) {
        for (const auto& inst : *set) {
            if (inst.label < 0 || static_cast<std::size_t>(inst.label) >= n_classes) {
                throw std::invalid_argument("document label out of range");
            }
        }
    }
    model::Model m = pretrained;
    m.params.set_all_trainable(mode != DocMode::frozen_repr);
    m.params.set_trainable(m.hart.u0, false);
    TaskModel tm = attach_head(std::move(m), make_head(pretrained.config.d_model, n_classes,
                                                       cfg.seed ^ 0x68656164ull));
    auto loss = [&](Tape& t, const TaskModel& cur, std::size_t i, const model::ForwardOptions& o) {
        return doc_loss(t, cur, train[i], mode, o);
    };
    auto dev_loss = [&](const TaskModel& cur) -> std::optional<double> {
        if (dev.empty()) return std::nullopt;
        double s = 0.0;
        for (const auto& inst : dev) {
            Tape t(false);
            s += t.value(doc_loss(t, cur, inst, mode, {}))[0];
        }
        return s / static_cast<double>(dev.size());
    };
    return run_finetune(std::move(tm), train.size(), cfg, loss, dev_loss, on_record);
}

std::vector<UserInstance> build_user_instances(const LabeledUserSet& users,
                                               const corpus::Vocabulary& vocab,
                                               std::size_t block_size, std::size_t max_blocks) {
    std::vector<UserInstance> out;
    for (const auto& u : users.records) {
        corpus::UserRecord rec{u.user_id, u.messages};
        UserInstance inst;
        inst.seq = corpus::segment_into_blocks(rec, vocab, {block_size, max_blocks, false});
        if (inst.seq.num_nonpad_blocks == 0) {
            throw std::invalid_argument("user " + u.user_id + " has no non-PAD blocks");
        }
        inst.target = u.target;
        out.push_back(std::move(inst));
    }
    return out;
}

Var user_representation(Tape& t, const model::Model& m, const corpus::BlockSequence& seq,
                        const model::ForwardOptions& opts) {
    if (seq.num_nonpad_blocks == 0) {
        throw std::invalid_argument("user " + seq.user_id + " has no non-PAD blocks");
    }
    const auto fwd = model::forward_blocks(t, m, seq, model::RecurrenceMode::full, opts);
    std::vector<Var> states(fwd.trajectory.begin() + 1, fwd.trajectory.end());
    if (states.size() == 1) return states[0];
    const Var stacked = num::concat_rows(t, states);
    const std::vector<std::uint8_t> keep(states.size(), 1);
    return num::masked_mean_rows(t, stacked, keep);
}

std::vector<double> predict_users(const TaskModel& tm, std::span<const UserInstance> data) {
    std::vector<double> out;
    out.reserve(data.size());
    for (const auto& inst : data) {
        Tape t(false);
        out.push_back(t.value(apply_head(t, tm, user_representation(t, tm.model, inst.seq)))[0]);
    }
    return out;
}

FinetuneResult finetune_user(const model::Model& pretrained, std::span<const UserInstance> train,
                             std::span<const UserInstance> dev, const FinetuneConfig& cfg,
                             FreezePolicy freeze,
                             const std::function<void(const FinetuneRecord&)>& on_record) {
    model::Model m = pretrained;
    m.params.set_all_trainable(freeze == FreezePolicy::none);
    if (freeze == FreezePolicy::recurrence_only) {
        for (auto id : m.recurrence_param_ids()) m.params.set_trainable(id, true);
    }
    m.params.set_trainable(m.hart.u0, false);
    TaskModel tm =
        attach_head(std::move(m), make_head(pretrained.config.d_model, 1, cfg.seed ^ 0x68656164ull));
    auto loss = [&](Tape& t, const TaskModel& cur, std::size_t i, const model::ForwardOptions& o) {
        return user_loss(t, cur, train[i], o);
    };
    auto dev_loss = [&](const TaskModel& cur) -> std::optional<double> {
        if (dev.empty()) return std::nullopt;
        double s = 0.0;
        for (const auto& inst : dev) {
            Tape t(false);
            s += t.value(user_loss(t, cur, inst, {}))[0];
        }
        return s / static_cast<double>(dev.size());
    };
    return run_finetune(std::move(tm), train.size(), cfg, loss, dev_loss, on_record);
}

double baseline_user_predict(std::span<const double> message_predictions) {
    if (message_predictions.empty()) {
        throw std::invalid_argument("baseline_user_predict: no message predictions");
    }
    double s = 0.0;
    for (double p : message_predictions) s += p;
    return s / static_cast<double>(message_predictions.size());
}

}  // namespace hart::finetune
