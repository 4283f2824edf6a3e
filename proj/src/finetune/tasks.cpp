#include "hart/finetune/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hart/numerics/random.hpp"
#include "hart/util/text.hpp"

namespace hart::finetune {
namespace {

// Split per user: first test users, then dev, rest train, after a shuffle.
std::vector<std::string> assign_splits(std::size_t n, double dev, double test, num::Rng rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    const auto n_test = static_cast<std::size_t>(std::llround(test * static_cast<double>(n)));
    const auto n_dev = static_cast<std::size_t>(std::llround(dev * static_cast<double>(n)));
    if (n_test + n_dev >= n) throw std::invalid_argument("task split leaves no training users");
    std::vector<std::string> split(n, "train");
    for (std::size_t i = 0; i < n_test; ++i) split[order[i]] = "test";
    for (std::size_t i = n_test; i < n_test + n_dev; ++i) split[order[i]] = "dev";
    return split;
}

void check_fractions(double dev, double test) {
    if (dev < 0.0 || test < 0.0 || dev + test >= 1.0) {
        throw std::invalid_argument("task split fractions must be >= 0 and sum below 1");
    }
}

}  // namespace

void DocumentTaskConfig::validate() const {
    history.validate();
    if (history.n_styles < 2) throw std::invalid_argument("document task: history.n_styles must be >= 2");
    if (docs_per_user == 0) throw std::invalid_argument("document task: docs_per_user must be > 0");
    if (labeled_tokens_min == 0 || labeled_tokens_max < labeled_tokens_min) {
        throw std::invalid_argument("document task: labeled_tokens_min/max must satisfy 1 <= min <= max");
    }
    if (!(labeled_bias >= 0.0 && labeled_bias <= 1.0)) {
        throw std::invalid_argument("document task: labeled_bias must be in [0, 1]");
    }
    check_fractions(dev_fraction, test_fraction);
}

SyntheticTask generate_document_task(const DocumentTaskConfig& cfg) {
    cfg.validate();
    SyntheticTask out;
    out.data = corpus::generate_synthetic_corpus(cfg.history);
    num::Rng rng(cfg.history.seed ^ 0x6C6162656C73ull);
    const auto n = out.data.corpus.num_users();
    const auto splits = assign_splits(n, cfg.dev_fraction, cfg.test_fraction, rng.fork(1));

    for (std::size_t u = 0; u < n; ++u) {
        const auto& user = out.data.corpus.users()[u];
        const auto& lat = out.data.latents[u];
        num::Rng urng = rng.fork(100 + u);
        std::vector<int> complement;
        for (std::size_t w = 0; w < cfg.history.vocab_size; ++w) {
            if (!std::binary_search(lat.subvocab.begin(), lat.subvocab.end(), static_cast<int>(w))) {
                complement.push_back(static_cast<int>(w));
            }
        }
        std::int64_t ts = user.messages.back().timestamp;
        for (std::size_t d = 0; d < cfg.docs_per_user; ++d) {
            ts += 60 + static_cast<std::int64_t>(urng.below(3'600));
            const std::size_t n_tok = cfg.labeled_tokens_min +
                                      urng.below(cfg.labeled_tokens_max - cfg.labeled_tokens_min + 1);
            std::string text;
            for (std::size_t k = 0; k < n_tok; ++k) {
                const auto& pool = urng.uniform() < cfg.labeled_bias ? lat.subvocab : complement;
                if (k) text += ' ';
                text += corpus::synthetic_word(static_cast<std::size_t>(pool[urng.below(pool.size())]));
            }
            out.labels.push_back(LabeledLine{user.user_id, ts, splits[u],
                                             "c" + std::to_string(lat.style), std::move(text)});
        }
    }
    return out;
}

void UserTaskConfig::validate() const {
    corpus.validate();
    check_fractions(dev_fraction, test_fraction);
}

SyntheticTask generate_user_task(const UserTaskConfig& cfg) {
    cfg.validate();
    SyntheticTask out;
    out.data = corpus::generate_synthetic_corpus(cfg.corpus);
    num::Rng rng(cfg.corpus.seed ^ 0x75736572ull);
    const auto n = out.data.corpus.num_users();
    const auto splits = assign_splits(n, cfg.dev_fraction, cfg.test_fraction, rng.fork(1));
    for (std::size_t u = 0; u < n; ++u) {
        const auto& user = out.data.corpus.users()[u];
        out.labels.push_back(LabeledLine{user.user_id, user.messages.back().timestamp, splits[u],
                                         util::format_double(out.data.latents[u].bias), ""});
    }
    return out;
}

}  // namespace hart::finetune
