#include "hart/model/params.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "hart/numerics/random.hpp"

namespace hart::model {
namespace {

using num::Tensor;

std::string layer_name(std::size_t l, const char* leaf) {
    return "h." + std::to_string(l) + "." + leaf;
}

struct Builder {
    num::ParameterSet& ps;
    num::Rng& rng;

    ParamId normal(std::string name, num::Shape shape, double stddev) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
        return ps.add(std::move(name), std::move(t));
    }
    ParamId constant(std::string name, num::Shape shape, double v) {
        return ps.add(std::move(name), Tensor(std::move(shape), v));
    }
};

// Creates (init) or looks up (bind) the fixed parameter layout.
template <typename Get>
Model layout(const ModelConfig& cfg, num::ParameterSet params, Get&& get) {
    Model m;
    m.config = cfg;
    m.params = std::move(params);
    const std::size_t d = cfg.d_model;
    const std::size_t f = cfg.mlp_ratio * d;
    const double std_w = 0.02;
    const double std_res = 0.02 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers));
    m.wte = get(m.params, "wte", num::Shape{cfg.vocab_size, d}, 'n', std_w);
    m.wpe = get(m.params, "wpe", num::Shape{cfg.block_size, d}, 'n', std_w);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        LayerParams lp;
        lp.ln1_g = get(m.params, layer_name(l, "ln_1.g"), num::Shape{d}, '1', 0.0);
        lp.ln1_b = get(m.params, layer_name(l, "ln_1.b"), num::Shape{d}, '0', 0.0);
        lp.wq = get(m.params, layer_name(l, "attn.wq"), num::Shape{d, d}, 'n', std_w);
        lp.bq = get(m.params, layer_name(l, "attn.bq"), num::Shape{d}, '0', 0.0);
        lp.wk = get(m.params, layer_name(l, "attn.wk"), num::Shape{d, d}, 'n', std_w);
        lp.bk = get(m.params, layer_name(l, "attn.bk"), num::Shape{d}, '0', 0.0);
        lp.wv = get(m.params, layer_name(l, "attn.wv"), num::Shape{d, d}, 'n', std_w);
        lp.bv = get(m.params, layer_name(l, "attn.bv"), num::Shape{d}, '0', 0.0);
        lp.wo = get(m.params, layer_name(l, "attn.wo"), num::Shape{d, d}, 'n', std_res);
        lp.bo = get(m.params, layer_name(l, "attn.bo"), num::Shape{d}, '0', 0.0);
        lp.ln2_g = get(m.params, layer_name(l, "ln_2.g"), num::Shape{d}, '1', 0.0);
        lp.ln2_b = get(m.params, layer_name(l, "ln_2.b"), num::Shape{d}, '0', 0.0);
        lp.w_fc = get(m.params, layer_name(l, "mlp.w_fc"), num::Shape{d, f}, 'n', std_w);
        lp.b_fc = get(m.params, layer_name(l, "mlp.b_fc"), num::Shape{f}, '0', 0.0);
        lp.w_proj = get(m.params, layer_name(l, "mlp.w_proj"), num::Shape{f, d}, 'n', std_res);
        lp.b_proj = get(m.params, layer_name(l, "mlp.b_proj"), num::Shape{d}, '0', 0.0);
        m.layers.push_back(lp);
    }
    m.lnf_g = get(m.params, "ln_f.g", num::Shape{d}, '1', 0.0);
    m.lnf_b = get(m.params, "ln_f.b", num::Shape{d}, '0', 0.0);
    m.hart.w_u = get(m.params, "hart.w_u", num::Shape{d, d}, 'n', std_w);
    m.hart.w_h = get(m.params, "hart.w_h", num::Shape{d, d}, 'n', std_w);
    m.hart.u0 = get(m.params, "hart.u0", num::Shape{1, d}, '0', 0.0);
    m.hart.wq_user = get(m.params, "hart.wq_user", num::Shape{d, d}, 'n', std_w);
    return m;
}

}  // namespace

num::Tensor Model::extended_query_weight() const {
    const Tensor& top = params.value(insert_layer().wq);
    const Tensor& bottom = params.value(hart.wq_user);
    const std::size_t d = config.d_model;
    Tensor out({2 * d, d});
    std::copy(top.values().begin(), top.values().end(), out.data());
    std::copy(bottom.values().begin(), bottom.values().end(), out.data() + d * d);
    return out;
}

std::vector<ParamId> Model::recurrence_param_ids() const {
    return {hart.w_u, hart.w_h, insert_layer().wq, hart.wq_user, insert_layer().bq};
}

void Model::zero_user_pathway() {
    params.value(hart.w_u).fill(0.0);
    params.value(hart.w_h).fill(0.0);
    params.value(hart.wq_user).fill(0.0);
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    num::Rng rng(seed);
    Model m = layout(config, num::ParameterSet{},
                     [&](num::ParameterSet& ps, std::string name, num::Shape shape, char kind,
                         double stddev) {
                         Builder b{ps, rng};
                         if (kind == 'n') return b.normal(std::move(name), std::move(shape), stddev);
                         return b.constant(std::move(name), std::move(shape),
                                           kind == '1' ? 1.0 : 0.0);
                     });
    // U0 defaults to the zero vector and is not learned.
    m.params.set_trainable(m.hart.u0, false);
    return m;
}

Model bind_model(const ModelConfig& config, num::ParameterSet params) {
    config.validate();
    Model m = layout(config, std::move(params),
                  [](num::ParameterSet& ps, const std::string& name, const num::Shape& shape,
                     char, double) {
                      const ParamId id = ps.at(name);
                      if (ps.value(id).shape() != shape) {
                          throw std::invalid_argument("parameter " + name + " has shape " +
                                                      num::shape_str(ps.value(id).shape()) +
                                                      ", config expects " +
                                                      num::shape_str(shape));
                      }
                      return id;
                  });
    m.params.set_trainable(m.hart.u0, false);
    return m;
}

}  // namespace hart::model
