#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ops.hpp"
#include "tensor.hpp"

namespace ivusseg {

enum class OpKind {
    leaf,
    constant,
    conv2d,
    maxpool2,
    upsample2,
    concat,
    prelu,
    sigmoid,
    add,
    mul,
    sum,
    affine,
    soft_dice,
};

class Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the define-by-run tape: the cached forward value, a grad of
// identical shape, and a closure that pushes this node's grad into its
// parents. Parameters are leaves owned by the ParamStore.
class Node {
public:
    Node(OpKind kind, Tensor value, bool requires_grad)
        : kind(kind), value(std::move(value)), requires_grad(requires_grad) {}

    OpKind kind;
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool requires_grad;
    std::string label;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;

    void accumulate(const Tensor& g);
    void zero_grad() { grad = Tensor(); }
};

namespace graph {

using ops::Padding;

NodePtr leaf(Tensor value, const std::string& label = "");
NodePtr constant(Tensor value);

NodePtr conv2d(const NodePtr& input, const NodePtr& kernel, const NodePtr& bias,
               int stride, Padding pad);
NodePtr maxpool2(const NodePtr& input);
NodePtr upsample2_nearest(const NodePtr& input);
NodePtr concat_channels(const NodePtr& a, const NodePtr& b);
NodePtr prelu(const NodePtr& input, const NodePtr& alpha);
NodePtr sigmoid(const NodePtr& input);
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr sum(const NodePtr& input);
NodePtr affine(const NodePtr& input, double scale, double shift);

// Mean over samples of 1 - (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth).
// Rank-4 predictions treat axis 0 as the sample axis; lower ranks are one
// sample. Differentiable w.r.t. pred only.
NodePtr soft_dice_loss(const NodePtr& pred, const Tensor& target, double smooth);

// Reverse-mode sweep from a scalar loss. Populates grads of every node that
// requires_grad, parameters included.
void backward(const NodePtr& loss);

} // namespace graph

} // namespace ivusseg
