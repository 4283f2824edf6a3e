#pragma once

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hart/corpus/blocks.hpp"
#include "hart/corpus/synthetic.hpp"
#include "hart/corpus/vocabulary.hpp"
#include "hart/model/params.hpp"
#include "hart/numerics/random.hpp"
#include "hart/numerics/tensor.hpp"

namespace hart::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "hart_test_";
        if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
        name += "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++);
        for (auto& c : name) {
            if (c == '/') c = '_';
        }
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

inline num::Tensor random_tensor(num::Shape shape, num::Rng& rng, double scale = 1.0) {
    num::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

inline model::ModelConfig tiny_config(std::size_t vocab = 20, std::size_t d = 8,
                                      std::size_t layers = 2, std::size_t heads = 2,
                                      std::size_t block = 8) {
    model::ModelConfig c;
    c.vocab_size = vocab;
    c.d_model = d;
    c.n_layers = layers;
    c.n_heads = heads;
    c.block_size = block;
    c.max_blocks = 4;
    c.dropout = 0.0;
    c.set_default_layers();
    return c;
}

// Scales every weight up so that small perturbations show in the outputs and
// the user-state pathway is far from zero.
inline model::Model generic_model(const model::ModelConfig& cfg, std::uint64_t seed,
                                  double scale = 0.3) {
    model::Model m = model::init_model(cfg, seed);
    num::Rng rng(seed ^ 0xABCDEFull);
    for (auto id : m.params.ids()) {
        if (id == m.hart.u0) continue;
        auto& v = m.params.value(id);
        if (v.rank() < 2) continue;
        for (std::size_t i = 0; i < v.numel(); ++i) v[i] = rng.normal(0.0, scale);
    }
    return m;
}

// Random token stream for a user, as messages of random length.
inline std::vector<std::vector<int>> random_messages(num::Rng& rng, std::size_t n_msgs,
                                                     std::size_t vocab, std::size_t max_len = 6) {
    std::vector<std::vector<int>> out;
    for (std::size_t i = 0; i < n_msgs; ++i) {
        std::vector<int> m(1 + rng.below(max_len));
        for (auto& x : m) x = 3 + static_cast<int>(rng.below(vocab - 3));
        out.push_back(std::move(m));
    }
    return out;
}

inline corpus::BlockSequence random_sequence(num::Rng& rng, std::size_t vocab,
                                             std::size_t block_size, std::size_t n_blocks,
                                             const std::string& user = "u") {
    // Enough tokens for n_blocks full blocks plus a partial one.
    std::vector<std::vector<int>> msgs;
    std::size_t total = 0;
    while (total < block_size * n_blocks - block_size / 2) {
        auto m = random_messages(rng, 1, vocab)[0];
        total += m.size() + 1;
        msgs.push_back(std::move(m));
    }
    return corpus::segment_into_blocks(user, msgs, {block_size, n_blocks, false});
}

}  // namespace hart::testing
