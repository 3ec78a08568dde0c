#include "lipar/tensor.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>
#include <unordered_set>

namespace lipar {

void log_warn(const std::string& msg) {
    std::cerr << "[warn] " << msg << "\n";
}

} // namespace lipar

namespace lipar::nn {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

void TensorImpl::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
}

namespace {

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<float> data) {
    const int64_t n = shape_numel(shape);
    if (n < 0 || static_cast<size_t>(n) != data.size())
        throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    for (int64_t d : shape)
        if (d <= 0) throw ShapeError("tensor: nonpositive extent in shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return impl;
}

thread_local int t_nograd_depth = 0;

} // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    auto n = static_cast<size_t>(shape_numel(shape));
    Tensor t(new_impl(std::move(shape), std::vector<float>(n, value)));
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
    Tensor t(new_impl(std::move(shape), std::move(values)));
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::uniform(Shape shape, float lo, float hi, Prng& rng, bool requires_grad) {
    auto n = static_cast<size_t>(shape_numel(shape));
    std::vector<float> values(n);
    for (auto& v : values) v = static_cast<float>(rng.next_real(lo, hi));
    return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(float value) {
    return from({1}, {value});
}

void Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
}

std::span<const float> Tensor::grad() const {
    if (impl_->grad.empty())
        throw Error("tensor: grad requested but none has been accumulated");
    return impl_->grad;
}

void Tensor::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

float Tensor::item() const {
    if (numel() != 1) throw ShapeError("tensor: item() on non-scalar of shape " + shape_str(shape()));
    return impl_->data[0];
}

Tensor Tensor::clone_detached() const {
    Tensor t(new_impl(impl_->shape, impl_->data));
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
}

Tensor make_node(Shape shape, std::vector<float> data,
                 std::vector<std::shared_ptr<TensorImpl>> parents,
                 std::function<void(const std::vector<float>&)> backward_fn) {
    Tensor t(new_impl(std::move(shape), std::move(data)));
    if (grad_enabled() && backward_fn) {
        bool any = false;
        for (const auto& p : parents)
            if (p && p->needs_grad()) { any = true; break; }
        if (any) {
            t.impl()->parents = std::move(parents);
            t.impl()->backward_fn = std::move(backward_fn);
        }
    }
    return t;
}

bool grad_enabled() {
    return t_nograd_depth == 0;
}

NoGradGuard::NoGradGuard() { ++t_nograd_depth; }
NoGradGuard::~NoGradGuard() { --t_nograd_depth; }

void accumulate_grad(TensorImpl& t, std::span<const float> value) {
    t.ensure_grad();
    if (t.grad.size() != value.size())
        throw ShapeError("grad accumulation: size mismatch");
    float* g = t.grad.data();
    for (size_t i = 0; i < value.size(); ++i) g[i] += value[i];
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw Error("backward: undefined tensor");
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    auto root = loss.impl();
    if (root->backward_done)
        throw Error("backward: graph already consumed for this loss");
    root->backward_done = true;
    if (!root->has_graph() && !root->requires_grad) return;

    // Iterative DFS post-order over parents; reverse gives topological order.
    // The order holds shared ownership: freeing a node's saved state while a
    // later node still awaits its sweep must not destroy it.
    std::vector<std::shared_ptr<TensorImpl>> order;
    std::unordered_set<TensorImpl*> seen;
    struct Frame {
        std::shared_ptr<TensorImpl> node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            const auto& p = f.node->parents[f.next_parent++];
            if (p && p->has_graph() && !seen.count(p.get())) {
                seen.insert(p.get());
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0f;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = it->get();
        if (!node->backward_fn) continue;
        node->ensure_grad();
        node->backward_fn(node->grad);
        // Consume the node: free the closure (and its saved tensors) plus the
        // intermediate grad buffer. Leaf grads are kept for the optimizer.
        node->backward_fn = nullptr;
        node->parents.clear();
        if (!node->requires_grad) {
            node->grad.clear();
            node->grad.shrink_to_fit();
        }
    }
}

} // namespace lipar::nn
