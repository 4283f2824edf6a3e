#include "hart/numerics/params.hpp"

#include <cmath>
#include <stdexcept>

namespace hart::num {

ParamId ParameterSet::add(std::string name, Tensor value, bool trainable) {
    if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    trainable_.push_back(trainable);
    return ParamId{values_.size() - 1};
}

std::size_t ParameterSet::total_elements() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
}

void ParameterSet::set_all_trainable(bool on) {
    for (std::size_t i = 0; i < trainable_.size(); ++i) trainable_[i] = on;
}

std::optional<ParamId> ParameterSet::find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return ParamId{i};
    }
    return std::nullopt;
}

ParamId ParameterSet::at(std::string_view name) const {
    if (auto id = find(name)) return *id;
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

std::vector<ParamId> ParameterSet::ids() const {
    std::vector<ParamId> out;
    out.reserve(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out.push_back(ParamId{i});
    return out;
}

Gradients::Gradients(const ParameterSet& params) : grads_(params.size()) {
    shapes_.reserve(params.size());
    for (auto id : params.ids()) shapes_.push_back(params.value(id).shape());
}

Tensor& Gradients::slot(ParamId id) {
    Tensor& g = grads_.at(id.index);
    if (g.empty() && shape_numel(shapes_[id.index]) > 0) g = Tensor(shapes_[id.index]);
    return g;
}

void Gradients::zero() {
    for (auto& g : grads_) g = Tensor();
}

void Gradients::add(const Gradients& other) {
    if (other.grads_.size() != grads_.size()) {
        throw std::invalid_argument("Gradients::add: layout mismatch");
    }
    for (std::size_t i = 0; i < grads_.size(); ++i) {
        const Tensor& src = other.grads_[i];
        if (src.empty()) continue;
        Tensor& dst = slot(ParamId{i});
        for (std::size_t j = 0; j < src.numel(); ++j) dst[j] += src[j];
    }
}

void Gradients::scale(double factor) {
    for (auto& g : grads_) {
        for (std::size_t j = 0; j < g.numel(); ++j) g[j] *= factor;
    }
}

double Gradients::global_norm() const {
    double s = 0.0;
    for (const auto& g : grads_) {
        for (std::size_t j = 0; j < g.numel(); ++j) s += g[j] * g[j];
    }
    return std::sqrt(s);
}

}  // namespace hart::num
