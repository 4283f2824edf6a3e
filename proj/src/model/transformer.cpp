#include "hart/model/transformer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hart::model {

using num::Tape;
using num::Var;

namespace {

// Large finite fill: softmax input stays finite and masked weights are exactly 0.
constexpr double kMaskFill = -1e30;

Var dense(Tape& t, Var x, Var w, Var b) { return num::add_row(t, num::matmul(t, x, w), b); }

Var maybe_dropout(Tape& t, Var x, double p, const ForwardOptions& opts) {
    if (!opts.training || p <= 0.0) return x;
    if (!opts.rng) throw std::invalid_argument("dropout in training mode needs an Rng");
    return num::dropout(t, x, p, *opts.rng);
}

}  // namespace

std::vector<std::uint8_t> causal_fill_mask(std::span<const std::uint8_t> key_mask) {
    const std::size_t n = key_mask.size();
    std::vector<std::uint8_t> fill(n * n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        bool any = false;
        for (std::size_t j = 0; j <= i; ++j) {
            if (key_mask[j]) {
                fill[i * n + j] = 0;
                any = true;
            }
        }
        if (!any) fill[i * n + i] = 0;
    }
    return fill;
}

Var attention(Tape& t, Var q, Var k, Var v, std::span<const std::uint8_t> fill_mask,
              std::size_t n_heads) {
    const std::size_t d = t.value(q).cols();
    const std::size_t rows = t.value(q).rows();
    if (n_heads == 0 || d % n_heads != 0) {
        throw num::ShapeError("attention: " + std::to_string(n_heads) + " heads for width " +
                              std::to_string(d));
    }
    if (fill_mask.size() != rows * t.value(k).rows()) {
        throw num::ShapeError("attention: mask size does not match query/key lengths");
    }
    const std::size_t hd = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<Var> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const Var qh = num::slice_cols(t, q, h * hd, hd);
        const Var kh = num::slice_cols(t, k, h * hd, hd);
        const Var vh = num::slice_cols(t, v, h * hd, hd);
        Var scores = num::scale(t, num::matmul_nt(t, qh, kh), scale);
        scores = num::masked_fill(t, scores, fill_mask, kMaskFill);
        const Var probs = num::softmax_rows(t, scores);
        heads.push_back(num::matmul(t, probs, vh));
    }
    return n_heads == 1 ? heads[0] : num::concat_cols(t, heads);
}

BlockForward forward_block(Tape& t, const Model& m, std::span<const int> tokens,
                           std::span<const std::uint8_t> attention_mask,
                           std::optional<Var> user_state, const ForwardOptions& opts) {
    const ModelConfig& cfg = m.config;
    const std::size_t n = tokens.size();
    if (n == 0 || n > cfg.block_size) {
        throw std::invalid_argument("forward_block: " + std::to_string(n) +
                                    " tokens for block_size " + std::to_string(cfg.block_size));
    }
    if (attention_mask.size() != n) {
        throw std::invalid_argument("forward_block: attention mask length mismatch");
    }
    for (int id : tokens) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
            throw std::out_of_range("forward_block: token id " + std::to_string(id) +
                                    " outside vocabulary of " + std::to_string(cfg.vocab_size));
        }
    }
    const auto& P = m.params;
    auto p = [&](num::ParamId id) { return t.param(P, id); };

    std::vector<int> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<int>(i);

    BlockForward out;
    const Var wte = p(m.wte);
    Var x = num::add(t, num::embedding(t, wte, tokens), num::embedding(t, p(m.wpe), pos));
    out.embeddings = x;
    x = maybe_dropout(t, x, cfg.dropout, opts);

    const std::vector<std::uint8_t> fill = causal_fill_mask(attention_mask);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerParams& L = m.layers[l];
        const Var h = num::layer_norm(t, x, p(L.ln1_g), p(L.ln1_b), cfg.ln_eps);
        Var q = num::matmul(t, h, p(L.wq));
        if (user_state && l + 1 == cfg.insert_layer) {
            // [h ; u] * [Wq ; Wq_user] == h*Wq + u*Wq_user, u broadcast per position.
            const Var uq = num::matmul(t, *user_state, p(m.hart.wq_user));
            q = num::add_row(t, q, uq);
        }
        q = num::add_row(t, q, p(L.bq));
        const Var k = dense(t, h, p(L.wk), p(L.bk));
        const Var v = dense(t, h, p(L.wv), p(L.bv));
        Var a = attention(t, q, k, v, fill, cfg.n_heads);
        a = dense(t, a, p(L.wo), p(L.bo));
        x = num::add(t, x, maybe_dropout(t, a, cfg.dropout, opts));

        const Var h2 = num::layer_norm(t, x, p(L.ln2_g), p(L.ln2_b), cfg.ln_eps);
        Var f = num::gelu(t, dense(t, h2, p(L.w_fc), p(L.b_fc)));
        f = dense(t, f, p(L.w_proj), p(L.b_proj));
        x = num::add(t, x, maybe_dropout(t, f, cfg.dropout, opts));
        out.hidden.push_back(x);
    }
    const Var xf = num::layer_norm(t, x, p(m.lnf_g), p(m.lnf_b), cfg.ln_eps);
    out.logits = num::matmul_nt(t, xf, wte);
    return out;
}

PlainOutput forward_block_plain(const Model& m, std::span<const int> tokens,
                                std::span<const std::uint8_t> attention_mask) {
    Tape t(false);
    const BlockForward f = forward_block(t, m, tokens, attention_mask, std::nullopt);
    PlainOutput out;
    out.logits = t.value(f.logits);
    for (Var h : f.hidden) out.hidden.push_back(t.value(h));
    return out;
}

}  // namespace hart::model
