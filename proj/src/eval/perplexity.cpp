#include "hart/eval/perplexity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include "hart/util/text.hpp"

namespace hart::eval {

std::vector<TokenNll> score_tokens(const model::Model& m, const corpus::BlockSequence& seq,
                                   model::RecurrenceMode mode) {
    num::Tape t(false);
    const auto fwd = model::forward_blocks(t, m, seq, mode);
    std::vector<TokenNll> out;
    for (const auto& br : fwd.blocks) {
        const auto& blk = seq.blocks[br.block_index];
        const auto targets = train::block_targets(blk);
        const auto& logits = t.value(br.forward.logits);
        const auto nll = num::row_nll(logits, targets);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (targets[i] < 0) continue;
            TokenNll tok{br.block_index, i + 1, train::target_key(blk, i + 1), nll[i], nll[i]};
            if (!tok.key.is_separator) {
                // log-sum-exp of the row is logit[target] + nll.
                const auto row = logits.row(i);
                const double lse = row[static_cast<std::size_t>(targets[i])] + nll[i];
                const double p_sep = std::exp(row[corpus::Vocabulary::kInsep] - lse);
                tok.word_nll = nll[i] + std::log1p(-p_sep);
            }
            out.push_back(tok);
        }
    }
    return out;
}

corpus::BlockSequence cap_blocks(const corpus::BlockSequence& seq, std::size_t k) {
    corpus::BlockSequence out = seq;
    out.blocks.clear();
    for (const auto& b : seq.blocks) {
        if (b.is_pad_block) continue;
        if (k && out.blocks.size() == k) {
            out.truncated = true;
            break;
        }
        out.blocks.push_back(b);
    }
    out.num_nonpad_blocks = out.blocks.size();
    return out;
}

std::vector<double> PerplexityResult::user_mean_nll() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < users.size(); ++i) {
        out.push_back(user_tokens[i] ? user_nll[i] / static_cast<double>(user_tokens[i]) : 0.0);
    }
    return out;
}

namespace {

void finish(PerplexityResult& r, const char* what) {
    if (r.tokens == 0) throw std::invalid_argument(std::string(what) + ": no tokens to score");
    r.ppl = std::exp(r.nll / static_cast<double>(r.tokens));
}

}  // namespace

PerplexityResult perplexity(const model::Model& m, std::span<const corpus::BlockSequence> data,
                            model::RecurrenceMode mode, std::size_t history_blocks) {
    PerplexityResult r;
    for (const auto& full : data) {
        const auto seq = cap_blocks(full, history_blocks);
        if (seq.blocks.empty()) continue;
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& tok : score_tokens(m, seq, mode)) {
            s += tok.nll;
            ++n;
        }
        r.users.push_back(seq.user_id);
        r.user_nll.push_back(s);
        r.user_tokens.push_back(n);
        r.nll += s;
        r.tokens += n;
    }
    finish(r, "perplexity");
    return r;
}

std::string base_user(const std::string& instance_id) {
    return instance_id.substr(0, instance_id.find('#'));
}

PairedPerplexity compare_perplexity(const model::Model& model_a,
                                    std::span<const corpus::BlockSequence> data_a,
                                    model::RecurrenceMode mode_a, const model::Model& model_b,
                                    std::span<const corpus::BlockSequence> data_b,
                                    model::RecurrenceMode mode_b, PairedScoring scoring) {
    using Key = std::tuple<std::string, std::size_t, std::size_t>;
    auto collect = [scoring](const model::Model& m, std::span<const corpus::BlockSequence> data,
                      model::RecurrenceMode mode, std::vector<std::string>& order) {
        std::map<Key, double> out;
        for (const auto& seq : data) {
            const std::string user = base_user(seq.user_id);
            if (order.empty() || order.back() != user) order.push_back(user);
            for (const auto& tok : score_tokens(m, seq, mode)) {
                if (tok.key.is_separator) continue;
                out.emplace(Key{user, tok.key.message, tok.key.offset},
                            scoring == PairedScoring::joint ? tok.nll : tok.word_nll);
            }
        }
        return out;
    };
    std::vector<std::string> order_a, order_b;
    const auto sa = collect(model_a, data_a, mode_a, order_a);
    const auto sb = collect(model_b, data_b, mode_b, order_b);

    PairedPerplexity out;
    std::map<std::string, std::size_t> slot;
    for (const auto& u : order_a) {
        if (slot.count(u)) continue;
        slot[u] = out.a.users.size();
        for (auto* r : {&out.a, &out.b}) {
            r->users.push_back(u);
            r->user_nll.push_back(0.0);
            r->user_tokens.push_back(0);
        }
    }
    for (const auto& [key, nll_a] : sa) {
        const auto it = sb.find(key);
        if (it == sb.end()) continue;
        const std::size_t i = slot.at(std::get<0>(key));
        out.a.user_nll[i] += nll_a;
        out.b.user_nll[i] += it->second;
        ++out.a.user_tokens[i];
        ++out.b.user_tokens[i];
    }
    // Users without shared tokens are dropped; sums follow user order so the
    // result does not depend on map iteration details.
    for (auto* r : {&out.a, &out.b}) {
        PerplexityResult kept;
        for (std::size_t i = 0; i < r->users.size(); ++i) {
            if (r->user_tokens[i] == 0) continue;
            kept.users.push_back(r->users[i]);
            kept.user_nll.push_back(r->user_nll[i]);
            kept.user_tokens.push_back(r->user_tokens[i]);
            kept.nll += r->user_nll[i];
            kept.tokens += r->user_tokens[i];
        }
        finish(kept, "compare_perplexity");
        *r = std::move(kept);
    }
    return out;
}

std::vector<SweepRow> history_sweep(const model::Model& m,
                                    std::span<const corpus::BlockSequence> data,
                                    std::span<const std::size_t> ks, model::RecurrenceMode mode) {
    if (ks.empty()) throw std::invalid_argument("history_sweep: no block counts");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] == 0 || (i && ks[i] <= ks[i - 1])) {
            throw std::invalid_argument("history_sweep: block counts must be positive and ascending");
        }
    }
    const std::size_t k_max = ks.back();
    std::vector<SweepRow> rows;
    for (auto k : ks) rows.push_back(SweepRow{k, {}});

    for (const auto& full : data) {
        const auto seq = cap_blocks(full, k_max);
        if (seq.blocks.empty()) continue;
        const std::size_t target = seq.blocks.size() - 1;
        for (auto& row : rows) {
            const std::size_t first = target + 1 >= row.k ? target + 1 - row.k : 0;
            corpus::BlockSequence sub = seq;
            sub.blocks.assign(seq.blocks.begin() + static_cast<std::ptrdiff_t>(first),
                              seq.blocks.end());
            sub.num_nonpad_blocks = sub.blocks.size();
            const std::size_t scored = sub.blocks.size() - 1;
            double s = 0.0;
            std::size_t n = 0;
            for (const auto& tok : score_tokens(m, sub, mode)) {
                if (tok.block != scored) continue;
                s += tok.nll;
                ++n;
            }
            row.result.users.push_back(seq.user_id);
            row.result.user_nll.push_back(s);
            row.result.user_tokens.push_back(n);
            row.result.nll += s;
            row.result.tokens += n;
        }
    }
    for (auto& row : rows) finish(row.result, "history_sweep");
    return rows;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
    std::string out = "k\tperplexity\n";
    for (const auto& r : rows) {
        out += std::to_string(r.k) + '\t' + util::format_double(r.result.ppl) + '\n';
    }
    return out;
}

}  // namespace hart::eval
