#include "autodiff.hpp"

#include <algorithm>
#include <unordered_set>

namespace ivusseg {

void Node::accumulate(const Tensor& g) {
    if (grad.empty()) grad = Tensor(value.shape());
    require_same_shape(grad, g, "gradient accumulation");
    for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] += g[i];
}

namespace graph {

namespace {

bool any_requires(const std::vector<NodePtr>& parents) {
    return std::any_of(parents.begin(), parents.end(),
                       [](const NodePtr& p) { return p->requires_grad; });
}

NodePtr make(OpKind kind, Tensor value, std::vector<NodePtr> parents,
             std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>(kind, std::move(value), any_requires(parents));
    node->parents = std::move(parents);
    if (node->requires_grad) node->backprop = std::move(backprop);
    return node;
}

} // namespace

NodePtr leaf(Tensor value, const std::string& label) {
    auto node = std::make_shared<Node>(OpKind::leaf, std::move(value), true);
    node->label = label;
    return node;
}

NodePtr constant(Tensor value) {
    return std::make_shared<Node>(OpKind::constant, std::move(value), false);
}

NodePtr conv2d(const NodePtr& input, const NodePtr& kernel, const NodePtr& bias,
               int stride, Padding pad) {
    Tensor y = ops::conv2d(input->value, kernel->value, bias->value, stride, pad);
    return make(OpKind::conv2d, std::move(y), {input, kernel, bias},
                [stride, pad](Node& self) {
                    Node& x = *self.parents[0];
                    Node& w = *self.parents[1];
                    Node& b = *self.parents[2];
                    Tensor gx, gw, gb;
                    ops::conv2d_backward(x.value, w.value, self.grad, stride, pad,
                                         x.requires_grad ? &gx : nullptr,
                                         w.requires_grad ? &gw : nullptr,
                                         b.requires_grad ? &gb : nullptr);
                    if (x.requires_grad) x.accumulate(gx);
                    if (w.requires_grad) w.accumulate(gw);
                    if (b.requires_grad) b.accumulate(gb);
                });
}

NodePtr maxpool2(const NodePtr& input) {
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    Tensor y = ops::maxpool2(input->value, argmax.get());
    return make(OpKind::maxpool2, std::move(y), {input}, [argmax](Node& self) {
        Node& x = *self.parents[0];
        x.accumulate(ops::maxpool2_backward(self.grad, *argmax, x.value.shape()));
    });
}

NodePtr upsample2_nearest(const NodePtr& input) {
    Tensor y = ops::upsample2_nearest(input->value);
    return make(OpKind::upsample2, std::move(y), {input}, [](Node& self) {
        self.parents[0]->accumulate(ops::upsample2_backward(self.grad));
    });
}

NodePtr concat_channels(const NodePtr& a, const NodePtr& b) {
    Tensor y = ops::concat_channels(a->value, b->value);
    const int ca = a->value.dim(1);
    return make(OpKind::concat, std::move(y), {a, b}, [ca](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        Tensor ga, gb;
        ops::concat_backward(self.grad, ca,
                             a.requires_grad ? &ga : nullptr,
                             b.requires_grad ? &gb : nullptr);
        if (a.requires_grad) a.accumulate(ga);
        if (b.requires_grad) b.accumulate(gb);
    });
}

NodePtr prelu(const NodePtr& input, const NodePtr& alpha) {
    Tensor y = ops::prelu(input->value, alpha->value);
    return make(OpKind::prelu, std::move(y), {input, alpha}, [](Node& self) {
        Node& x = *self.parents[0];
        Node& a = *self.parents[1];
        Tensor gx, ga;
        ops::prelu_backward(x.value, a.value, self.grad,
                            x.requires_grad ? &gx : nullptr,
                            a.requires_grad ? &ga : nullptr);
        if (x.requires_grad) x.accumulate(gx);
        if (a.requires_grad) a.accumulate(ga);
    });
}

NodePtr sigmoid(const NodePtr& input) {
    Tensor y = ops::sigmoid(input->value);
    return make(OpKind::sigmoid, std::move(y), {input}, [](Node& self) {
        self.parents[0]->accumulate(ops::sigmoid_backward(self.value, self.grad));
    });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor y(a->value.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] + b->value[i];
    return make(OpKind::add, std::move(y), {a, b}, [](Node& self) {
        for (auto& p : self.parents)
            if (p->requires_grad) p->accumulate(self.grad);
    });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor y(a->value.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] * b->value[i];
    return make(OpKind::mul, std::move(y), {a, b}, [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad) {
            Tensor g(self.grad.shape());
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] = self.grad[i] * b.value[i];
            a.accumulate(g);
        }
        if (b.requires_grad) {
            Tensor g(self.grad.shape());
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] = self.grad[i] * a.value[i];
            b.accumulate(g);
        }
    });
}

NodePtr sum(const NodePtr& input) {
    double s = 0.0;
    for (std::size_t i = 0; i < input->value.numel(); ++i) s += input->value[i];
    return make(OpKind::sum, Tensor::scalar(s), {input}, [](Node& self) {
        Node& x = *self.parents[0];
        x.accumulate(Tensor::full(x.value.shape(), self.grad[0]));
    });
}

NodePtr affine(const NodePtr& input, double scale, double shift) {
    Tensor y(input->value.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = scale * input->value[i] + shift;
    return make(OpKind::affine, std::move(y), {input}, [scale](Node& self) {
        Tensor g(self.grad.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = scale * self.grad[i];
        self.parents[0]->accumulate(g);
    });
}

NodePtr soft_dice_loss(const NodePtr& pred, const Tensor& target, double smooth) {
    const Tensor& p = pred->value;
    require_same_shape(p, target, "soft_dice_loss");
    if (smooth <= 0.0)
        throw Error("soft_dice_loss: smooth must be positive, got " + std::to_string(smooth));

    const int samples = p.rank() == 4 ? p.dim(0) : 1;
    const std::size_t per = p.numel() / samples;

    // Per-sample numerators 2*sum(p*t)+s and denominators sum(p)+sum(t)+s.
    auto num = std::make_shared<std::vector<double>>(samples);
    auto den = std::make_shared<std::vector<double>>(samples);
    double loss = 0.0;
    for (int n = 0; n < samples; ++n) {
        double pt = 0.0, ps = 0.0, ts = 0.0;
        const std::size_t base = n * per;
        for (std::size_t i = 0; i < per; ++i) {
            pt += p[base + i] * target[base + i];
            ps += p[base + i];
            ts += target[base + i];
        }
        (*num)[n] = 2.0 * pt + smooth;
        (*den)[n] = ps + ts + smooth;
        loss += 1.0 - (*num)[n] / (*den)[n];
    }
    loss /= samples;

    auto tgt = std::make_shared<Tensor>(target);
    return make(OpKind::soft_dice, Tensor::scalar(loss), {pred},
                [num, den, tgt, samples, per](Node& self) {
                    Node& pr = *self.parents[0];
                    const double gy = self.grad[0];
                    Tensor g(pr.value.shape());
                    for (int n = 0; n < samples; ++n) {
                        const double N = (*num)[n], D = (*den)[n];
                        const std::size_t base = n * per;
                        // d/dp of -(N/D): -(2*t*D - N)/D^2, averaged over samples.
                        const double c = gy / samples;
                        for (std::size_t i = 0; i < per; ++i)
                            g[base + i] = -c * (2.0 * (*tgt)[base + i] * D - N) / (D * D);
                    }
                    pr.accumulate(g);
                });
}

void backward(const NodePtr& loss) {
    if (!loss) throw Error("backward: null loss node");
    if (loss->value.numel() != 1)
        throw DimError("backward: loss must be scalar-shaped, got " +
                       loss->value.shape_str());

    // Iterative post-order over parents (the tape can be deep).
    std::vector<NodePtr> order;
    std::unordered_set<const Node*> seen;
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(loss, 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodePtr parent = node->parents[next++];
            if (parent->requires_grad && seen.insert(parent.get()).second)
                stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->accumulate(Tensor::scalar(1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& node = **it;
        if (node.backprop && !node.grad.empty()) node.backprop(node);
    }
}

} // namespace graph

} // namespace ivusseg
