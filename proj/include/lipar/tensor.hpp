#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lipar/errors.hpp"
#include "lipar/prng.hpp"

namespace lipar::nn {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// One node of the recorded gradient graph.
///
/// The graph is an implicit tape: every operator that runs while gradients are
/// enabled stores its parents (for topological ordering) and a closure that
/// pushes the adjoint of this node into the parents' grad buffers. backward()
/// walks the nodes in reverse topological order, visiting each exactly once,
/// then drops the recorded closures so a graph cannot be replayed by accident.
struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad; // allocated on first write
    bool requires_grad = false;
    bool backward_done = false;

    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(const std::vector<float>&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool has_graph() const { return static_cast<bool>(backward_fn); }
    bool needs_grad() const { return requires_grad || has_graph(); }
    void ensure_grad();
};

/// Dense float32 tensor with value semantics over a shared buffer.
/// Copies are cheap handle copies; the payload is immutable by convention once
/// an operator has consumed it.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
    static Tensor uniform(Shape shape, float lo, float hi, Prng& rng, bool requires_grad = false);
    static Tensor scalar(float value);

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const { return impl_->shape; }
    size_t rank() const { return impl_->shape.size(); }
    int64_t dim(size_t i) const { return impl_->shape.at(i); }
    int64_t numel() const { return impl_->numel(); }

    std::span<float> data() { return impl_->data; }
    std::span<const float> data() const { return impl_->data; }
    float* raw() { return impl_->data.data(); }
    const float* raw() const { return impl_->data.data(); }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on);
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const float> grad() const;
    void zero_grad();

    /// Value of a single-element tensor.
    float item() const;

    /// Deep copy with no graph attached.
    Tensor clone_detached() const;

    std::shared_ptr<TensorImpl>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;

    friend Tensor make_node(Shape shape, std::vector<float> data,
                            std::vector<std::shared_ptr<TensorImpl>> parents,
                            std::function<void(const std::vector<float>&)> backward_fn);
};

/// Internal factory used by operators.
Tensor make_node(Shape shape, std::vector<float> data,
                 std::vector<std::shared_ptr<TensorImpl>> parents,
                 std::function<void(const std::vector<float>&)> backward_fn);

/// True when operators should record the gradient graph on this thread.
bool grad_enabled();

/// RAII scope that disables graph recording on the current thread.
/// Inference-mode forwards (evaluation, simulation) run under this guard.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Reverse-mode sweep from a scalar loss. Accumulates into the grad buffer of
/// every tensor that requires grad, exactly once per tensor, then consumes the
/// graph. Calling it twice on the same loss is an error.
void backward(const Tensor& loss);

/// Adds `value` into the grad buffer of `t` (allocating it if needed).
/// Used by operator adjoints.
void accumulate_grad(TensorImpl& t, std::span<const float> value);

} // namespace lipar::nn
