#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hart/numerics/tensor.hpp"

namespace hart::num {

struct ParamId {
    std::size_t index = 0;
    friend bool operator==(ParamId, ParamId) = default;
};

// Named, ordered collection of learnable tensors. Order is insertion order and
// is what serialization and optimizer state follow.
class ParameterSet {
public:
    ParamId add(std::string name, Tensor value, bool trainable = true);

    std::size_t size() const { return values_.size(); }
    std::size_t total_elements() const;

    const std::string& name(ParamId id) const { return names_.at(id.index); }
    Tensor& value(ParamId id) { return values_.at(id.index); }
    const Tensor& value(ParamId id) const { return values_.at(id.index); }
    bool trainable(ParamId id) const { return trainable_.at(id.index); }
    void set_trainable(ParamId id, bool on) { trainable_.at(id.index) = on; }
    void set_all_trainable(bool on);

    std::optional<ParamId> find(std::string_view name) const;
    ParamId at(std::string_view name) const;

    std::vector<ParamId> ids() const;

    friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::vector<bool> trainable_;
};

// Gradient buffers laid out like a ParameterSet. Allocated lazily so that
// parameters a tape never touched stay empty.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(const ParameterSet& params);

    std::size_t size() const { return grads_.size(); }
    bool has(ParamId id) const { return !grads_.at(id.index).empty(); }
    const Tensor& get(ParamId id) const { return grads_.at(id.index); }
    Tensor& slot(ParamId id);

    void zero();
    void add(const Gradients& other);
    void scale(double factor);
    double global_norm() const;

private:
    std::vector<Shape> shapes_;
    std::vector<Tensor> grads_;
};

}  // namespace hart::num
