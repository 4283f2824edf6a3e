#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <deque>
#include <vector>

#include "hart/numerics/params.hpp"
#include "hart/numerics/tensor.hpp"

namespace hart::num {

class Tape;

// Handle to a value recorded on a Tape. Only meaningful together with the
// tape that produced it.
struct Var {
    std::size_t id = 0;
};

using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

// Single-owner record of a forward computation. Nodes are appended in
// evaluation order, so walking them backwards is a reverse topological order
// and each node is visited once.
class Tape {
public:
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    bool recording() const { return record_; }

    Var constant(Tensor value);
    Var leaf(Tensor value, bool requires_grad = true);
    // References the parameter's storage; the set must outlive the tape.
    Var param(const ParameterSet& params, ParamId id);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // Gradient of the last backward() w.r.t. a leaf or intermediate (empty if
    // no gradient reached it).
    const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }

    // Seeds d(out)/d(out) = 1 for a single-element `out` and propagates.
    // Parameter gradients are added into `grads` (if given) for trainable
    // parameters. Returns the ids of nodes whose backward ran, in order.
    std::vector<std::size_t> backward(Var out, Gradients* grads = nullptr);

    // Op-author interface.
    Var push(Tensor value, bool requires_grad, BackwardFn fn);
    Tensor& grad_slot(Var v);
    void accumulate_grad(Var v, const Tensor& g);

private:
    struct Node {
        Tensor value;
        const Tensor* external = nullptr;
        Tensor grad;
        bool requires_grad = false;
        std::optional<ParamId> param;
        BackwardFn backward;
    };

    bool record_;
    std::deque<Node> nodes_;
};

}  // namespace hart::num
