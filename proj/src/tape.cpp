#include "facefuse/tape.hpp"

#include <limits>

namespace facefuse {

const Tensor& Var::value() const {
    if (!valid()) throw ContractError("Var::value on an invalid handle");
    return tape->value(*this);
}

Var Tape::leaf(Tensor value) {
    if (nodes_.size() >= static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max())) {
        throw ContractError("tape node limit exceeded");
    }
    nodes_.push_back(Node{std::move(value), {}, nullptr, {}});
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, std::vector<std::int32_t> inputs, BackwardFn backward,
               std::vector<std::size_t> aux) {
    for (std::int32_t in : inputs) check_id(in);
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), std::move(aux)});
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const {
    if (v.tape != this) throw ContractError("Var belongs to a different tape");
    check_id(v.id);
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

const Tape::Node& Tape::node(std::int32_t id) const {
    check_id(id);
    return nodes_[static_cast<std::size_t>(id)];
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss lives on a different tape");
    check_id(loss.id);
    if (nodes_[static_cast<std::size_t>(loss.id)].value.numel() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " +
                            shape_str(nodes_[static_cast<std::size_t>(loss.id)].value.shape()));
    }
    grads_.assign(nodes_.size(), Tensor{});
    ran_backward_ = true;
    grad_buffer(loss.id)[0] = 1.0;
    for (std::int32_t id = loss.id; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (grads_[static_cast<std::size_t>(id)].empty() || !n.backward) continue;
        n.backward(*this, id, grads_[static_cast<std::size_t>(id)]);
    }
}

Tensor Tape::grad(Var v) const {
    if (!ran_backward_) throw ContractError("grad read before backward()");
    if (v.tape != this) throw ContractError("Var belongs to a different tape");
    check_id(v.id);
    const Tensor& g = grads_[static_cast<std::size_t>(v.id)];
    if (g.empty()) return Tensor(nodes_[static_cast<std::size_t>(v.id)].value.shape());
    ensure_finite(g, "backward");
    return g;
}

Tensor& Tape::grad_buffer(std::int32_t id) {
    check_id(id);
    Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty()) g = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape());
    return g;
}

void Tape::check_id(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw ContractError("tape node id " + std::to_string(id) + " out of range");
    }
}

}  // namespace facefuse
