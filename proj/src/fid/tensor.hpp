#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fid/common.hpp"
#include "fid/rng.hpp"

namespace fid {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // sized lazily; same length as data when present
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    // Propagates this node's grad into parents' grad buffers. Must not
    // capture the node itself (would create a reference cycle); the node is
    // passed in at invocation time.
    std::function<void(TensorImpl&)> backward_fn;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

}  // namespace detail

// Dense row-major float32 tensor with reverse-mode autodiff. Value semantics
// over a shared payload: copies alias the same buffer, which is how the tape
// references operands. Mutation is confined to leaf parameters between
// forward passes (optimizer updates).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float value);
    static Tensor from(Shape shape, std::vector<float> values);
    static Tensor scalar(float value) { return from({1}, {value}); }
    static Tensor randn(Shape shape, Rng& rng, float stddev = 1.0f);
    static Tensor uniform(Shape shape, Rng& rng, float lo, float hi);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t numel() const { return impl_->numel(); }
    std::int64_t dim(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t rank() const { return impl_->shape.size(); }

    float* data() { return impl_->data.data(); }
    const float* data() const { return impl_->data.data(); }
    std::vector<float>& buffer() { return impl_->data; }
    const std::vector<float>& buffer() const { return impl_->data; }

    float item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on);
    bool is_leaf() const { return impl_->is_leaf; }

    bool has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size(); }
    const std::vector<float>& grad() const;
    std::vector<float>& grad_buffer();
    void zero_grad();

    // Same payload, detached from the tape, never requiring grad.
    Tensor detached() const;
    // Deep copy of the data (fresh leaf).
    Tensor clone() const;

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
    static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl) {
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Reverse-mode sweep from a scalar loss. Interior-node grads are reset each
// call; leaf grads accumulate until zero_grad().
void backward(const Tensor& loss);

// Scoped guard disabling tape recording (inference / metrics).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_mode_enabled();

// Throws NumericError if any element is NaN/Inf. `what` names the offender
// in the message.
void check_finite(const Tensor& t, const char* what);
void check_finite_buffer(const float* p, std::int64_t n, const char* what);

}  // namespace fid
