#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "facefuse/tensor.hpp"

namespace facefuse {

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
};

/// Recorded forward computation. Nodes are appended in evaluation order, so
/// the tape is topologically sorted by construction; one reverse sweep from
/// a scalar output yields a gradient for every reachable node.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::int32_t node_id, const Tensor& gout)>;

    struct Node {
        Tensor value;
        std::vector<std::int32_t> inputs;
        BackwardFn backward;             // empty for leaves
        std::vector<std::size_t> aux;    // op-specific saved indices
    };

    /// Record an input (parameter or data) node.
    Var leaf(Tensor value);

    /// Record an op node. Inputs must already live on this tape.
    Var push(Tensor value, std::vector<std::int32_t> inputs, BackwardFn backward,
             std::vector<std::size_t> aux = {});

    const Tensor& value(Var v) const;
    const Node& node(std::int32_t id) const;
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar output. Gradients of nodes unreachable
    /// from `loss` read back as zeros.
    void backward(Var loss);

    /// Gradient of a node after backward(); zeros if the node was not
    /// reached. Throws if backward() has not run.
    Tensor grad(Var v) const;

    /// Mutable gradient buffer for backward fns; zero-initialized to the
    /// node's value shape on first access.
    Tensor& grad_buffer(std::int32_t id);

private:
    void check_id(std::int32_t id) const;

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool ran_backward_ = false;
};

}  // namespace facefuse
