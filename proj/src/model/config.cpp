#include "hart/model/config.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "hart/util/text.hpp"

namespace hart::model {

void ModelConfig::set_default_layers() {
    insert_layer = std::min<std::size_t>(2, n_layers > 1 ? n_layers - 1 : 1);
    extract_layer = n_layers > 1 ? n_layers - 1 : 1;
    if (extract_layer <= insert_layer) extract_layer = n_layers;
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("model config: " + field + " " + why);
    };
    if (vocab_size < 4) fail("vocab_size", "must be >= 4 (3 reserved ids + 1 word)");
    if (d_model == 0) fail("d_model", "must be > 0");
    if (n_heads == 0 || d_model % n_heads != 0) fail("n_heads", "must divide d_model");
    if (n_layers < 2) fail("n_layers", "must be >= 2");
    if (block_size < 2) fail("block_size", "must be >= 2");
    if (max_blocks < 1) fail("max_blocks", "must be >= 1");
    if (insert_layer < 1 || insert_layer >= extract_layer || extract_layer > n_layers) {
        fail("insert_layer/extract_layer", "must satisfy 1 <= insert < extract <= n_layers");
    }
    if (mlp_ratio == 0) fail("mlp_ratio", "must be > 0");
    if (dropout < 0.0 || dropout >= 1.0) fail("dropout", "must be in [0, 1)");
    if (!(ln_eps > 0.0)) fail("ln_eps", "must be > 0");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
    return {
        {"vocab_size", std::to_string(vocab_size)},
        {"d_model", std::to_string(d_model)},
        {"n_layers", std::to_string(n_layers)},
        {"n_heads", std::to_string(n_heads)},
        {"block_size", std::to_string(block_size)},
        {"insert_layer", std::to_string(insert_layer)},
        {"extract_layer", std::to_string(extract_layer)},
        {"max_blocks", std::to_string(max_blocks)},
        {"mlp_ratio", std::to_string(mlp_ratio)},
        {"dropout", util::format_double(dropout)},
        {"ln_eps", util::format_double(ln_eps)},
    };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
    ModelConfig c;
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::invalid_argument(std::string("model config: missing ") + key);
        return it->second;
    };
    c.vocab_size = util::parse_size(get("vocab_size"), "vocab_size");
    c.d_model = util::parse_size(get("d_model"), "d_model");
    c.n_layers = util::parse_size(get("n_layers"), "n_layers");
    c.n_heads = util::parse_size(get("n_heads"), "n_heads");
    c.block_size = util::parse_size(get("block_size"), "block_size");
    c.insert_layer = util::parse_size(get("insert_layer"), "insert_layer");
    c.extract_layer = util::parse_size(get("extract_layer"), "extract_layer");
    c.max_blocks = util::parse_size(get("max_blocks"), "max_blocks");
    c.mlp_ratio = util::parse_size(get("mlp_ratio"), "mlp_ratio");
    c.dropout = util::parse_double(get("dropout"), "dropout");
    c.ln_eps = util::parse_double(get("ln_eps"), "ln_eps");
    return c;
}

}  // namespace hart::model
