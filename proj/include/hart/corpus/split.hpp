#pragma once

#include <cstdint>

#include "hart/corpus/corpus.hpp"

namespace hart::corpus {

struct SplitFractions {
    double dev_unseen = 0.1;   // whole users, disjoint from train
    double test_unseen = 0.1;  // whole users, disjoint from train and dev
    double seen_users = 0.0;   // fraction of train users with held-out messages
    double heldout_message_fraction = 0.2;  // latest messages moved out per seen user
};

struct CorpusSplits {
    UserCorpus train;
    UserCorpus dev_unseen;
    UserCorpus test_unseen;
    UserCorpus dev_seen_heldout;
};

// Users keep their corpus order inside each split. Throws when a split with a
// positive fraction would receive no users or train would be empty.
CorpusSplits split_users(const UserCorpus& corpus, const SplitFractions& fractions,
                         std::uint64_t seed);

}  // namespace hart::corpus
