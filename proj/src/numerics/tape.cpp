#include "hart/numerics/tape.hpp"

#include <stdexcept>

namespace hart::num {

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && record_;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::param(const ParameterSet& params, ParamId id) {
    Node n;
    n.external = &params.value(id);
    n.requires_grad = record_ && params.trainable(id);
    n.param = id;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.external ? *n.external : n.value;
}

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && record_;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Tensor& Tape::grad_slot(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.empty()) n.grad = Tensor(value(v).shape());
    return n.grad;
}

void Tape::accumulate_grad(Var v, const Tensor& g) {
    Node& n = nodes_.at(v.id);
    if (!n.requires_grad) return;
    Tensor& dst = grad_slot(v);
    if (dst.numel() != g.numel()) {
        throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match " +
                         shape_str(dst.shape()));
    }
    for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
}

std::vector<std::size_t> Tape::backward(Var out, Gradients* grads) {
    if (!record_) throw std::logic_error("backward() on a tape that does not record");
    if (value(out).numel() != 1) {
        throw ShapeError("backward() needs a scalar output, got " +
                         shape_str(value(out).shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    std::vector<std::size_t> visited;
    if (!nodes_.at(out.id).requires_grad) return visited;
    grad_slot(out)[0] = 1.0;

    for (std::size_t i = out.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) {
            visited.push_back(i);
            // The callback only touches its inputs' grads, which precede node i.
            Tensor g = std::move(n.grad);
            n.backward(*this, g);
            n.grad = std::move(g);
        } else if (n.param && grads) {
            visited.push_back(i);
            Tensor& dst = grads->slot(*n.param);
            for (std::size_t j = 0; j < n.grad.numel(); ++j) dst[j] += n.grad[j];
        }
    }
    return visited;
}

}  // namespace hart::num
