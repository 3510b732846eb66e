#include "fid/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace fid {

namespace {
thread_local bool g_grad_mode = true;
}

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) {
        if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(Shape shape) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0f);
    impl->shape = std::move(shape);
    return wrap(std::move(impl));
}

Tensor Tensor::full(Shape shape, float value) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.buffer()) v = value;
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    check_finite_buffer(impl->data.data(), impl->numel(), "tensor literal");
    return wrap(std::move(impl));
}

Tensor Tensor::randn(Shape shape, Rng& rng, float stddev) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.buffer()) v = static_cast<float>(rng.normal() * stddev);
    return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, float lo, float hi) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.buffer()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

float Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
    if (on && !impl_->is_leaf)
        throw Error("requires_grad can only be toggled on leaf tensors");
    impl_->requires_grad = on;
}

const std::vector<float>& Tensor::grad() const {
    if (!has_grad()) throw Error("grad accessed before backward()");
    return impl_->grad;
}

std::vector<float>& Tensor::grad_buffer() {
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    impl_->grad.assign(impl_->data.size(), 0.0f);
}

Tensor Tensor::detached() const {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;  // copy of payload, no tape edge
    return wrap(std::move(impl));
}

Tensor Tensor::clone() const {
    return detached();
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward() requires a scalar loss, got " + shape_str(loss.shape()));

    // Iterative post-order DFS to build a topological order.
    std::vector<detail::TensorImpl*> topo;
    std::unordered_set<detail::TensorImpl*> visited;
    struct Frame {
        detail::TensorImpl* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.impl().get(), 0});
    visited.insert(loss.impl().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::TensorImpl* p = f.node->parents[f.next_parent++].get();
            if (!visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    // Reset interior grads; leaves keep accumulating.
    for (auto* node : topo) {
        if (!node->is_leaf)
            node->grad.assign(node->data.size(), 0.0f);
        else if (node->requires_grad)
            node->ensure_grad();
    }
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += 1.0f;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        detail::TensorImpl* node = *it;
        if (node->backward_fn) node->backward_fn(*node);
    }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_mode) {
    g_grad_mode = false;
}

NoGradGuard::~NoGradGuard() {
    g_grad_mode = prev_;
}

bool grad_mode_enabled() {
    return g_grad_mode;
}

void check_finite_buffer(const float* p, std::int64_t n, const char* what) {
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i]))
            throw NumericError(std::string("non-finite value in ") + what + " at index " +
                               std::to_string(i));
    }
}

void check_finite(const Tensor& t, const char* what) {
    check_finite_buffer(t.data(), t.numel(), what);
}

}  // namespace fid
