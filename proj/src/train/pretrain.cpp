#include "hart/train/pretrain.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "hart/train/loss.hpp"

namespace hart::train {

std::vector<corpus::BlockSequence> build_instances(const corpus::UserCorpus& corpus,
                                                   const corpus::Vocabulary& vocab,
                                                   std::size_t block_size,
                                                   std::size_t max_blocks, InstanceKind kind,
                                                   bool pad_to_max) {
    std::vector<corpus::BlockSequence> out;
    const corpus::SegmentOptions so{block_size, max_blocks, pad_to_max};
    for (const auto& u : corpus.users()) {
        if (u.messages.empty()) continue;
        if (kind == InstanceKind::user_blocks) {
            out.push_back(corpus::segment_into_blocks(u, vocab, so));
            continue;
        }
        std::size_t last = u.messages.size();
        std::vector<std::vector<int>> encoded;
        for (std::size_t i = 0; i < u.messages.size(); ++i) {
            encoded.push_back(vocab.encode(u.messages[i].text));
            if (!encoded.back().empty()) last = i;
        }
        for (std::size_t i = 0; i < u.messages.size(); ++i) {
            std::vector<std::vector<int>> one{std::move(encoded[i])};
            if (one[0].empty()) continue;
            // The message boundary is predicted as in the user stream, where an
            // INSEP follows every message but the last.
            if (i < last) one[0].push_back(corpus::Vocabulary::kInsep);
            auto seq = corpus::segment_into_blocks(u.user_id + "#" + std::to_string(i), one,
                                                   {block_size, max_blocks, false});
            // Keep the message's index within the user so targets can be
            // matched against user-level segmentations.
            for (auto& blk : seq.blocks) {
                for (auto& sp : blk.spans) sp.message = i;
            }
            out.push_back(std::move(seq));
        }
    }
    return out;
}

void TrainConfig::validate() const {
    if (!(optim.lr >= 0.0)) throw std::invalid_argument("train config: lr must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be > 0");
}

NllTotals evaluate_nll(const model::Model& m, std::span<const corpus::BlockSequence> data,
                       model::RecurrenceMode mode) {
    NllTotals tot;
    for (const auto& seq : data) {
        num::Tape t(false);
        const auto fwd = model::forward_blocks(t, m, seq, mode);
        const auto loss = hulm_loss(t, fwd, seq);
        tot.nll += t.value(loss.total)[0];
        tot.tokens += loss.tokens;
    }
    return tot;
}

NllTotals accumulate_gradients(const model::Model& m, const corpus::BlockSequence& seq,
                               model::RecurrenceMode mode, const model::ForwardOptions& opts,
                               num::Gradients& grads) {
    num::Tape t(true);
    try {
        const auto fwd = model::forward_blocks(t, m, seq, mode, opts);
        const auto loss = hulm_loss(t, fwd, seq);
        const double v = t.value(loss.total)[0];
        if (!std::isfinite(v)) {
            throw TrainingDiverged("non-finite loss on instance '" + seq.user_id + "'");
        }
        if (loss.tokens > 0) t.backward(loss.total, &grads);
        return {v, loss.tokens};
    } catch (const num::NumericError& e) {
        throw TrainingDiverged("instance '" + seq.user_id + "': " + e.what());
    }
}

TrainResult pretrain(model::Model init, const TrainConfig& cfg,
                     std::span<const corpus::BlockSequence> train,
                     std::span<const corpus::BlockSequence> dev,
                     const std::function<void(const MetricsRecord&)>& on_record) {
    cfg.validate();
    if (train.empty()) throw std::invalid_argument("pretrain: empty training set");

    TrainResult res;
    model::Model& m = init;
    AdamW opt(m.params, cfg.optim);
    num::Rng rng(cfg.seed);
    num::Rng drop_rng = rng.fork(0xD0);
    const model::ForwardOptions fopts{m.config.dropout > 0.0, &drop_rng};

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    double best = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;
    model::Model best_model = m;
    bool stop = false;

    for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
        rng.shuffle(order);
        NllTotals epoch_tot;
        for (std::size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            num::Gradients grads(m.params);
            NllTotals batch;
            for (std::size_t i = start; i < end; ++i) {
                const NllTotals r = accumulate_gradients(m, train[order[i]], cfg.mode, fopts, grads);
                batch.nll += r.nll;
                batch.tokens += r.tokens;
            }
            if (batch.tokens == 0) continue;
            grads.scale(1.0 / static_cast<double>(batch.tokens));
            try {
                opt.step(m.params, grads);
            } catch (const std::runtime_error& e) {
                std::ostringstream os;
                os << "training diverged at step " << res.steps + 1 << " (epoch " << epoch
                   << "): " << e.what();
                throw TrainingDiverged(os.str());
            }
            ++res.steps;
            epoch_tot.nll += batch.nll;
            epoch_tot.tokens += batch.tokens;
            if (cfg.max_steps && res.steps >= cfg.max_steps) stop = true;
        }

        MetricsRecord rec;
        rec.step = res.steps;
        rec.epoch = epoch;
        rec.train_nll = epoch_tot.mean();
        if (!dev.empty()) {
            rec.dev_nll = evaluate_nll(m, dev, cfg.mode).mean();
        } else {
            rec.dev_nll = rec.train_nll;
        }
        if (!std::isfinite(rec.dev_nll)) {
            throw TrainingDiverged("non-finite dev loss after epoch " + std::to_string(epoch));
        }
        rec.ppl = std::exp(rec.dev_nll);
        res.log.push_back(rec);
        if (on_record) on_record(rec);

        if (rec.dev_nll < best) {
            best = rec.dev_nll;
            best_model = m;
            res.best_epoch = epoch;
            bad_epochs = 0;
        } else if (++bad_epochs > cfg.patience) {
            res.early_stopped = true;
            stop = true;
        }
    }

    res.best_dev_nll = best;
    res.optimizer = opt.state();
    res.model = std::move(best_model);
    return res;
}

}  // namespace hart::train
