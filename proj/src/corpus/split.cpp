#include "hart/corpus/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "hart/numerics/random.hpp"

namespace hart::corpus {
namespace {

std::size_t portion(double fraction, std::size_t n, const char* name) {
    if (fraction < 0.0 || fraction > 1.0) {
        throw std::invalid_argument(std::string("split fraction ") + name + " must be in [0, 1]");
    }
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (fraction > 0.0 && k == 0) {
        throw std::invalid_argument(std::string("too few users (") + std::to_string(n) +
                                    ") for split " + name + "=" + std::to_string(fraction));
    }
    return k;
}

}  // namespace

CorpusSplits split_users(const UserCorpus& corpus, const SplitFractions& f,
                         std::uint64_t seed) {
    if (f.dev_unseen + f.test_unseen > 1.0) {
        throw std::invalid_argument("split fractions sum to more than 1");
    }
    if (!(f.heldout_message_fraction > 0.0 && f.heldout_message_fraction < 1.0)) {
        throw std::invalid_argument("heldout_message_fraction must be in (0, 1)");
    }
    const std::size_t n = corpus.num_users();
    const std::size_t n_dev = portion(f.dev_unseen, n, "dev_unseen");
    const std::size_t n_test = portion(f.test_unseen, n, "test_unseen");
    if (n_dev + n_test >= n) {
        throw std::invalid_argument("too few users (" + std::to_string(n) +
                                    ") to leave any for training");
    }

    num::Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    // 0 = train, 1 = dev, 2 = test
    std::vector<int> role(n, 0);
    for (std::size_t i = 0; i < n_dev; ++i) role[order[i]] = 1;
    for (std::size_t i = n_dev; i < n_dev + n_test; ++i) role[order[i]] = 2;

    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < n; ++i) {
        if (role[i] == 0) train_idx.push_back(i);
    }
    const std::size_t n_seen = portion(f.seen_users, train_idx.size(), "seen_users");
    std::vector<std::size_t> seen_order = train_idx;
    rng.shuffle(seen_order);
    std::vector<bool> seen(n, false);
    for (std::size_t i = 0; i < n_seen; ++i) seen[seen_order[i]] = true;

    CorpusSplits out;
    for (std::size_t i = 0; i < n; ++i) {
        const UserRecord& u = corpus.users()[i];
        if (role[i] == 1) {
            out.dev_unseen.add_user(u);
        } else if (role[i] == 2) {
            out.test_unseen.add_user(u);
        } else if (seen[i] && u.messages.size() >= 2) {
            auto k = static_cast<std::size_t>(std::llround(
                f.heldout_message_fraction * static_cast<double>(u.messages.size())));
            k = std::clamp<std::size_t>(k, 1, u.messages.size() - 1);
            const std::size_t keep = u.messages.size() - k;
            UserRecord kept{u.user_id, {u.messages.begin(), u.messages.begin() + keep}};
            UserRecord held{u.user_id, {u.messages.begin() + keep, u.messages.end()}};
            out.train.add_user(std::move(kept));
            out.dev_seen_heldout.add_user(std::move(held));
        } else {
            out.train.add_user(u);
        }
    }
    return out;
}

}  // namespace hart::corpus
