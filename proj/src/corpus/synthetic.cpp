#include "hart/corpus/synthetic.hpp"

#include <algorithm>
#include <stdexcept>

#include "hart/corpus/vocabulary.hpp"
#include "hart/numerics/random.hpp"

namespace hart::corpus {
namespace {

std::vector<int> draw_subset(num::Rng& rng, std::size_t universe, std::size_t k) {
    std::vector<int> all(universe);
    for (std::size_t i = 0; i < universe; ++i) all[i] = static_cast<int>(i);
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.below(universe - i);
        std::swap(all[i], all[j]);
    }
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

void SyntheticConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("synthetic config: " + field + " " + why);
    };
    if (n_users == 0) fail("n_users", "must be > 0");
    if (messages_min == 0 || messages_max < messages_min) {
        fail("messages_min/messages_max", "must satisfy 1 <= min <= max");
    }
    if (tokens_min == 0 || tokens_max < tokens_min) {
        fail("tokens_min/tokens_max", "must satisfy 1 <= min <= max");
    }
    if (subvocab_size == 0 || subvocab_size >= vocab_size) {
        fail("subvocab_size", "must be in [1, vocab_size)");
    }
    if (!(bias > 0.0 && bias < 1.0)) fail("bias", "must be in (0, 1)");
    if (bias_max > bias && bias_max >= 1.0) fail("bias_max", "must be < 1");
}

std::string synthetic_word(std::size_t index) { return "w" + std::to_string(index); }

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg) {
    cfg.validate();
    num::Rng rng(cfg.seed);
    SyntheticCorpus out;

    for (std::size_t s = 0; s < cfg.n_styles; ++s) {
        out.styles.push_back(draw_subset(rng, cfg.vocab_size, cfg.subvocab_size));
    }

    const std::size_t width = std::to_string(cfg.n_users - 1).size();
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        num::Rng urng = rng.fork(u);
        UserLatent lat;
        std::string num = std::to_string(u);
        lat.user_id = cfg.user_prefix + std::string(width - num.size(), '0') + num;
        lat.bias = cfg.bias_max > cfg.bias
                       ? cfg.bias + (cfg.bias_max - cfg.bias) * urng.uniform()
                       : cfg.bias;
        if (cfg.n_styles > 0) {
            lat.style = u % cfg.n_styles;
            lat.subvocab = out.styles[lat.style];
        } else {
            lat.style = u;
            lat.subvocab = draw_subset(urng, cfg.vocab_size, cfg.subvocab_size);
        }
        std::vector<int> complement;
        complement.reserve(cfg.vocab_size - cfg.subvocab_size);
        for (std::size_t w = 0, j = 0; w < cfg.vocab_size; ++w) {
            if (j < lat.subvocab.size() && lat.subvocab[j] == static_cast<int>(w)) {
                ++j;
            } else {
                complement.push_back(static_cast<int>(w));
            }
        }

        UserRecord rec;
        rec.user_id = lat.user_id;
        const std::size_t n_msgs =
            cfg.messages_min + urng.below(cfg.messages_max - cfg.messages_min + 1);
        std::int64_t ts = cfg.start_time + static_cast<std::int64_t>(urng.below(86'400));
        for (std::size_t m = 0; m < n_msgs; ++m) {
            const std::size_t n_tok =
                cfg.tokens_min + urng.below(cfg.tokens_max - cfg.tokens_min + 1);
            std::string text;
            for (std::size_t k = 0; k < n_tok; ++k) {
                const bool from_sub = urng.uniform() < lat.bias;
                const auto& pool = from_sub ? lat.subvocab : complement;
                const int w = pool[urng.below(pool.size())];
                if (k) text += ' ';
                text += synthetic_word(static_cast<std::size_t>(w));
            }
            rec.messages.push_back(Message{ts, std::move(text)});
            ts += 60 + static_cast<std::int64_t>(urng.below(7'200));
        }
        out.corpus.add_user(std::move(rec));
        out.latents.push_back(std::move(lat));
    }
    return out;
}

std::vector<double> subvocab_rates(const SyntheticCorpus& data) {
    std::vector<double> rates;
    for (std::size_t u = 0; u < data.latents.size(); ++u) {
        const auto& lat = data.latents[u];
        std::size_t hits = 0;
        std::size_t total = 0;
        for (const auto& m : data.corpus.users()[u].messages) {
            for (auto w : whitespace_tokenize(m.text)) {
                const int idx = std::stoi(std::string(w.substr(1)));
                hits += std::binary_search(lat.subvocab.begin(), lat.subvocab.end(), idx);
                ++total;
            }
        }
        rates.push_back(total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0);
    }
    return rates;
}

}  // namespace hart::corpus
