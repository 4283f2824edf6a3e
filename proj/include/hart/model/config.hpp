#pragma once

#include <cstddef>
#include <map>
#include <string>

namespace hart::model {

// Layer indices are 1-based: layer l reads the output of layer l-1 (layer 0 is
// the embedding sum). The insert layer's query sees the user state; the
// extract layer's output feeds the state update.
struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 32;
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t block_size = 32;
    std::size_t insert_layer = 2;
    std::size_t extract_layer = 3;
    std::size_t max_blocks = 8;
    std::size_t mlp_ratio = 4;
    double dropout = 0.1;
    double ln_eps = 1e-5;

    // insert = min(2, n_layers - 1), extract = n_layers - 1 unless that would
    // not leave insert < extract, in which case extract = n_layers.
    void set_default_layers();
    void validate() const;

    std::size_t head_dim() const { return d_model / n_heads; }

    std::map<std::string, std::string> to_map() const;
    static ModelConfig from_map(const std::map<std::string, std::string>& kv);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace hart::model
