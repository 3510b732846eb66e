#include "fid/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fid {

namespace {

using detail::TensorImpl;

bool any_requires(const std::vector<Tensor>& inputs) {
    for (const auto& t : inputs)
        if (t.defined() && t.requires_grad()) return true;
    return false;
}

// Wraps raw result data into a graph node. The backward lambda receives the
// finished node so it can read node.grad; it must accumulate (+=) into the
// parents' grad buffers.
Tensor make_node(Shape shape, std::vector<float> data, const std::vector<Tensor>& inputs,
                 std::function<void(TensorImpl&)> bw) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    if (grad_mode_enabled() && any_requires(inputs)) {
        impl->is_leaf = false;
        impl->requires_grad = true;
        for (const auto& t : inputs)
            if (t.defined()) impl->parents.push_back(t.impl());
        impl->backward_fn = std::move(bw);
    }
    return Tensor::wrap(std::move(impl));
}

void check_inputs(std::initializer_list<const Tensor*> inputs, const char* op) {
    for (const Tensor* t : inputs) {
        if (t && t->defined()) check_finite(*t, op);
    }
}

std::vector<float>& grad_of(const Tensor& t) {
    return const_cast<Tensor&>(t).grad_buffer();
}

bool wants_grad(const Tensor& t) {
    return t.defined() && t.requires_grad();
}

// ---- broadcast machinery ----------------------------------------------

struct BroadcastPlan {
    Shape out;
    std::vector<std::int64_t> stride_a;  // 0 on broadcast dims
    std::vector<std::int64_t> stride_b;
    std::int64_t numel;
};

BroadcastPlan broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
    std::size_t rank = std::max(a.size(), b.size());
    Shape pa(rank, 1), pb(rank, 1);
    std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
    std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));
    BroadcastPlan plan;
    plan.out.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (pa[i] == pb[i] || pa[i] == 1 || pb[i] == 1) {
            plan.out[i] = std::max(pa[i], pb[i]);
        } else {
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                             shape_str(b) + " are not broadcastable");
        }
    }
    auto strides = [](const Shape& s) {
        std::vector<std::int64_t> st(s.size(), 1);
        for (std::int64_t i = static_cast<std::int64_t>(s.size()) - 2; i >= 0; --i)
            st[i] = st[i + 1] * s[i + 1];
        return st;
    };
    auto sa = strides(pa);
    auto sb = strides(pb);
    plan.stride_a.resize(rank);
    plan.stride_b.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        plan.stride_a[i] = (pa[i] == 1 && plan.out[i] != 1) ? 0 : sa[i];
        plan.stride_b[i] = (pb[i] == 1 && plan.out[i] != 1) ? 0 : sb[i];
    }
    plan.numel = shape_numel(plan.out);
    return plan;
}

// Calls fn(out_index, a_index, b_index) over the whole broadcast output.
template <typename Fn>
void broadcast_iter(const BroadcastPlan& plan, Fn&& fn) {
    std::size_t rank = plan.out.size();
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t io = 0; io < plan.numel; ++io) {
        fn(io, ia, ib);
        for (std::int64_t d = static_cast<std::int64_t>(rank) - 1; d >= 0; --d) {
            idx[d]++;
            ia += plan.stride_a[d];
            ib += plan.stride_b[d];
            if (idx[d] < plan.out[d]) break;
            idx[d] = 0;
            ia -= plan.stride_a[d] * plan.out[d];
            ib -= plan.stride_b[d] * plan.out[d];
        }
    }
}

enum class BinKind { add, sub, mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
    check_inputs({&a, &b}, name);
    BroadcastPlan plan = broadcast_shapes(a.shape(), b.shape(), name);
    std::vector<float> out(static_cast<std::size_t>(plan.numel));
    const float* pa = a.data();
    const float* pb = b.data();
    broadcast_iter(plan, [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
        switch (kind) {
            case BinKind::add: out[io] = pa[ia] + pb[ib]; break;
            case BinKind::sub: out[io] = pa[ia] - pb[ib]; break;
            case BinKind::mul: out[io] = pa[ia] * pb[ib]; break;
        }
    });
    Tensor ta = a, tb = b;
    return make_node(plan.out, std::move(out), {a, b}, [ta, tb, plan, kind](TensorImpl& node) {
        const float* g = node.grad.data();
        const float* da = ta.data();
        const float* db = tb.data();
        float* ga = wants_grad(ta) ? grad_of(ta).data() : nullptr;
        float* gb = wants_grad(tb) ? grad_of(tb).data() : nullptr;
        broadcast_iter(plan, [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
            switch (kind) {
                case BinKind::add:
                    if (ga) ga[ia] += g[io];
                    if (gb) gb[ib] += g[io];
                    break;
                case BinKind::sub:
                    if (ga) ga[ia] += g[io];
                    if (gb) gb[ib] -= g[io];
                    break;
                case BinKind::mul:
                    if (ga) ga[ia] += g[io] * db[ib];
                    if (gb) gb[ib] += g[io] * da[ia];
                    break;
            }
        });
    });
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Bwd bwd) {
    check_inputs({&a}, name);
    std::vector<float> out(static_cast<std::size_t>(a.numel()));
    const float* pa = a.data();
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = fwd(pa[i]);
    Tensor ta = a;
    return make_node(a.shape(), std::move(out), {a}, [ta, bwd](TensorImpl& node) {
        if (!wants_grad(ta)) return;
        float* ga = grad_of(ta).data();
        const float* g = node.grad.data();
        const float* x = ta.data();
        const float* y = node.data.data();
        for (std::int64_t i = 0; i < node.numel(); ++i) ga[i] += g[i] * bwd(x[i], y[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::mul, "mul"); }

Tensor scale(const Tensor& a, double s) {
    float fs = static_cast<float>(s);
    return unary_op(
        a, "scale", [fs](float x) { return x * fs; },
        [fs](float, float) { return fs; });
}

Tensor add_scalar(const Tensor& a, double s) {
    float fs = static_cast<float>(s);
    return unary_op(
        a, "add_scalar", [fs](float x) { return x + fs; },
        [](float, float) { return 1.0f; });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, "relu", [](float x) { return x > 0.0f ? x : 0.0f; },
        [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

// Saturating activations are nudged off their asymptotes so outputs stay
// strictly inside (-1,1) / (0,1) even where f32 rounds to the limit.
static const float kOneBelow = std::nextafter(1.0f, 0.0f);

Tensor tanh_op(const Tensor& a) {
    return unary_op(
        a, "tanh",
        [](float x) { return std::clamp(std::tanh(x), -kOneBelow, kOneBelow); },
        [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a, "sigmoid",
        [](float x) {
            float y = 1.0f / (1.0f + std::exp(-x));
            return std::clamp(y, std::numeric_limits<float>::min(), kOneBelow);
        },
        [](float, float y) { return y * (1.0f - y); });
}

Tensor leaky_relu(const Tensor& a, float neg_slope) {
    return unary_op(
        a, "leaky_relu", [neg_slope](float x) { return x > 0.0f ? x : neg_slope * x; },
        [neg_slope](float x, float) { return x > 0.0f ? 1.0f : neg_slope; });
}

Tensor abs_op(const Tensor& a) {
    return unary_op(
        a, "abs", [](float x) { return std::fabs(x); },
        [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); });
}

Tensor clamp(const Tensor& a, float lo, float hi) {
    if (lo > hi) throw Error("clamp: lo > hi");
    return unary_op(
        a, "clamp", [lo, hi](float x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](float x, float) { return (x >= lo && x <= hi) ? 1.0f : 0.0f; });
}

Tensor sum(const Tensor& a) {
    check_inputs({&a}, "sum");
    double acc = 0.0;
    const float* pa = a.data();
    for (std::int64_t i = 0; i < a.numel(); ++i) acc += pa[i];
    Tensor ta = a;
    return make_node({1}, {static_cast<float>(acc)}, {a}, [ta](TensorImpl& node) {
        if (!wants_grad(ta)) return;
        float g = node.grad[0];
        float* ga = grad_of(ta).data();
        for (std::int64_t i = 0; i < ta.numel(); ++i) ga[i] += g;
    });
}

Tensor mean(const Tensor& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<double>& weights) {
    if (terms.empty() || terms.size() != weights.size())
        throw ShapeError("weighted_sum: terms and weights must be non-empty and match");
    double acc = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        check_inputs({&terms[i]}, "weighted_sum");
        if (terms[i].numel() != 1)
            throw ShapeError("weighted_sum expects scalar terms, got " +
                             shape_str(terms[i].shape()));
        acc += weights[i] * static_cast<double>(terms[i].data()[0]);
    }
    std::vector<Tensor> inputs = terms;
    std::vector<double> w = weights;
    return make_node({1}, {static_cast<float>(acc)}, terms, [inputs, w](TensorImpl& node) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (!wants_grad(inputs[i])) continue;
            grad_of(inputs[i])[0] += static_cast<float>(w[i] * node.grad[0]);
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    check_inputs({&a}, "reshape");
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
    Tensor ta = a;
    std::vector<float> out(a.buffer());
    return make_node(std::move(shape), std::move(out), {a}, [ta](TensorImpl& node) {
        if (!wants_grad(ta)) return;
        float* ga = grad_of(ta).data();
        const float* g = node.grad.data();
        for (std::int64_t i = 0; i < node.numel(); ++i) ga[i] += g[i];
    });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    for (const auto& p : parts) {
        check_inputs({&p}, "concat_channels");
        if (p.rank() != 4)
            throw ShapeError("concat_channels expects rank-4 tensors, got " + shape_str(p.shape()));
    }
    const Shape& s0 = parts[0].shape();
    std::int64_t n = s0[0], h = s0[2], w = s0[3];
    std::int64_t ctotal = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s[0] != n || s[2] != h || s[3] != w)
            throw ShapeError("concat_channels: mismatched N/H/W between " + shape_str(s0) +
                             " and " + shape_str(s));
        ctotal += s[1];
    }
    std::vector<float> out(static_cast<std::size_t>(n * ctotal * h * w));
    std::int64_t plane = h * w;
    std::int64_t coff = 0;
    for (const auto& p : parts) {
        std::int64_t c = p.shape()[1];
        const float* src = p.data();
        for (std::int64_t in = 0; in < n; ++in) {
            std::memcpy(out.data() + (in * ctotal + coff) * plane, src + in * c * plane,
                        static_cast<std::size_t>(c * plane) * sizeof(float));
        }
        coff += c;
    }
    std::vector<Tensor> inputs = parts;
    return make_node({n, ctotal, h, w}, std::move(out), parts,
                     [inputs, n, ctotal, plane](TensorImpl& node) {
                         const float* g = node.grad.data();
                         std::int64_t coff = 0;
                         for (const auto& p : inputs) {
                             std::int64_t c = p.shape()[1];
                             if (wants_grad(p)) {
                                 float* gp = grad_of(p).data();
                                 for (std::int64_t in = 0; in < n; ++in) {
                                     const float* gsrc = g + (in * ctotal + coff) * plane;
                                     float* gdst = gp + in * c * plane;
                                     for (std::int64_t i = 0; i < c * plane; ++i) gdst[i] += gsrc[i];
                                 }
                             }
                             coff += c;
                         }
                     });
}

Tensor slice_channels(const Tensor& a, std::int64_t begin, std::int64_t count) {
    check_inputs({&a}, "slice_channels");
    if (a.rank() != 4) throw ShapeError("slice_channels expects rank-4, got " + shape_str(a.shape()));
    std::int64_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
    if (begin < 0 || count <= 0 || begin + count > c)
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                         std::to_string(begin + count) + ") out of " + std::to_string(c));
    std::int64_t plane = h * w;
    std::vector<float> out(static_cast<std::size_t>(n * count * plane));
    const float* src = a.data();
    for (std::int64_t in = 0; in < n; ++in)
        std::memcpy(out.data() + in * count * plane, src + (in * c + begin) * plane,
                    static_cast<std::size_t>(count * plane) * sizeof(float));
    Tensor ta = a;
    return make_node({n, count, h, w}, std::move(out), {a},
                     [ta, begin, count, n, c, plane](TensorImpl& node) {
                         if (!wants_grad(ta)) return;
                         float* ga = grad_of(ta).data();
                         const float* g = node.grad.data();
                         for (std::int64_t in = 0; in < n; ++in) {
                             float* gdst = ga + (in * c + begin) * plane;
                             const float* gsrc = g + in * count * plane;
                             for (std::int64_t i = 0; i < count * plane; ++i) gdst[i] += gsrc[i];
                         }
                     });
}

Tensor crop2d(const Tensor& a, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w) {
    check_inputs({&a}, "crop2d");
    if (a.rank() != 4) throw ShapeError("crop2d expects rank-4, got " + shape_str(a.shape()));
    std::int64_t n = a.dim(0), c = a.dim(1), ih = a.dim(2), iw = a.dim(3);
    if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > ih || x0 + w > iw)
        throw ShapeError("crop2d: window out of bounds for " + shape_str(a.shape()));
    std::vector<float> out(static_cast<std::size_t>(n * c * h * w));
    const float* src = a.data();
    for (std::int64_t nc = 0; nc < n * c; ++nc)
        for (std::int64_t y = 0; y < h; ++y)
            std::memcpy(out.data() + (nc * h + y) * w, src + (nc * ih + y0 + y) * iw + x0,
                        static_cast<std::size_t>(w) * sizeof(float));
    Tensor ta = a;
    return make_node({n, c, h, w}, std::move(out), {a},
                     [ta, y0, x0, h, w, n, c, ih, iw](TensorImpl& node) {
                         if (!wants_grad(ta)) return;
                         float* ga = grad_of(ta).data();
                         const float* g = node.grad.data();
                         for (std::int64_t nc = 0; nc < n * c; ++nc)
                             for (std::int64_t y = 0; y < h; ++y) {
                                 float* gdst = ga + (nc * ih + y0 + y) * iw + x0;
                                 const float* gsrc = g + (nc * h + y) * w;
                                 for (std::int64_t x = 0; x < w; ++x) gdst[x] += gsrc[x];
                             }
                     });
}

Tensor replicate_pad(const Tensor& a, std::int64_t p) {
    check_inputs({&a}, "replicate_pad");
    if (a.rank() != 4) throw ShapeError("replicate_pad expects rank-4, got " + shape_str(a.shape()));
    if (p < 0) throw ShapeError("replicate_pad: negative padding");
    std::int64_t n = a.dim(0), c = a.dim(1), ih = a.dim(2), iw = a.dim(3);
    std::int64_t oh = ih + 2 * p, ow = iw + 2 * p;
    std::vector<float> out(static_cast<std::size_t>(n * c * oh * ow));
    const float* src = a.data();
    auto cl = [](std::int64_t i, std::int64_t hi) { return std::min(std::max<std::int64_t>(i, 0), hi - 1); };
    for (std::int64_t nc = 0; nc < n * c; ++nc)
        for (std::int64_t y = 0; y < oh; ++y)
            for (std::int64_t x = 0; x < ow; ++x)
                out[(nc * oh + y) * ow + x] = src[(nc * ih + cl(y - p, ih)) * iw + cl(x - p, iw)];
    Tensor ta = a;
    return make_node({n, c, oh, ow}, std::move(out), {a},
                     [ta, p, n, c, ih, iw, oh, ow, cl](TensorImpl& node) {
                         if (!wants_grad(ta)) return;
                         float* ga = grad_of(ta).data();
                         const float* g = node.grad.data();
                         for (std::int64_t nc = 0; nc < n * c; ++nc)
                             for (std::int64_t y = 0; y < oh; ++y)
                                 for (std::int64_t x = 0; x < ow; ++x)
                                     ga[(nc * ih + cl(y - p, ih)) * iw + cl(x - p, iw)] +=
                                         g[(nc * oh + y) * ow + x];
                     });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad) {
    check_inputs({&input, &weight, &bias}, "conv2d");
    if (input.rank() != 4 || weight.rank() != 4)
        throw ShapeError("conv2d expects rank-4 input/weight, got " + shape_str(input.shape()) +
                         " / " + shape_str(weight.shape()));
    std::int64_t n = input.dim(0), c = input.dim(1), ih = input.dim(2), iw = input.dim(3);
    std::int64_t k = weight.dim(0), wc = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
    if (wc != c)
        throw ShapeError("conv2d: input channels " + std::to_string(c) +
                         " != weight channels " + std::to_string(wc));
    if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
    if (stride < 1 || pad < 0) throw ShapeError("conv2d: bad stride/pad");
    if (ih + 2 * pad < kh || iw + 2 * pad < kw)
        throw ShapeError("conv2d: input " + shape_str(input.shape()) + " smaller than kernel");
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != k))
        throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + " != [" +
                         std::to_string(k) + "]");
    std::int64_t oh = (ih + 2 * pad - kh) / stride + 1;
    std::int64_t ow = (iw + 2 * pad - kw) / stride + 1;

    std::vector<float> out(static_cast<std::size_t>(n * k * oh * ow));
    const float* pin = input.data();
    const float* pw = weight.data();
    const float* pb = bias.defined() ? bias.data() : nullptr;

#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::int64_t in = 0; in < n; ++in) {
        for (std::int64_t ik = 0; ik < k; ++ik) {
            float* dst = out.data() + (in * k + ik) * oh * ow;
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t x = 0; x < ow; ++x) {
                    double acc = pb ? pb[ik] : 0.0;
                    std::int64_t base_y = y * stride - pad;
                    std::int64_t base_x = x * stride - pad;
                    for (std::int64_t ic = 0; ic < c; ++ic) {
                        const float* src = pin + (in * c + ic) * ih * iw;
                        const float* wk = pw + ((ik * c + ic) * kh) * kw;
                        for (std::int64_t ky = 0; ky < kh; ++ky) {
                            std::int64_t sy = base_y + ky;
                            if (sy < 0 || sy >= ih) continue;
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                std::int64_t sx = base_x + kx;
                                if (sx < 0 || sx >= iw) continue;
                                acc += static_cast<double>(src[sy * iw + sx]) * wk[ky * kw + kx];
                            }
                        }
                    }
                    dst[y * ow + x] = static_cast<float>(acc);
                }
            }
        }
    }

    Tensor tin = input, tw = weight, tb = bias;
    auto bw = [tin, tw, tb, n, c, ih, iw, k, kh, kw, oh, ow, stride, pad](TensorImpl& node) {
        const float* g = node.grad.data();
        const float* pin = tin.data();
        const float* pw = tw.data();
        if (wants_grad(tin)) {
            float* gin = grad_of(tin).data();
            // Gather form: each input element reads the output grads that
            // touched it, keeping accumulation order deterministic.
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
            for (std::int64_t in = 0; in < n; ++in) {
                for (std::int64_t ic = 0; ic < c; ++ic) {
                    float* gdst = gin + (in * c + ic) * ih * iw;
                    for (std::int64_t sy = 0; sy < ih; ++sy) {
                        for (std::int64_t sx = 0; sx < iw; ++sx) {
                            double acc = 0.0;
                            for (std::int64_t ky = 0; ky < kh; ++ky) {
                                std::int64_t num_y = sy + pad - ky;
                                if (num_y < 0 || num_y % stride != 0) continue;
                                std::int64_t y = num_y / stride;
                                if (y >= oh) continue;
                                for (std::int64_t kx = 0; kx < kw; ++kx) {
                                    std::int64_t num_x = sx + pad - kx;
                                    if (num_x < 0 || num_x % stride != 0) continue;
                                    std::int64_t x = num_x / stride;
                                    if (x >= ow) continue;
                                    for (std::int64_t ik = 0; ik < k; ++ik) {
                                        acc += static_cast<double>(
                                                   g[((in * k + ik) * oh + y) * ow + x]) *
                                               pw[((ik * c + ic) * kh + ky) * kw + kx];
                                    }
                                }
                            }
                            gdst[sy * iw + sx] += static_cast<float>(acc);
                        }
                    }
                }
            }
        }
        if (wants_grad(tw)) {
            float* gw = grad_of(tw).data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (std::int64_t ik = 0; ik < k; ++ik) {
                for (std::int64_t ic = 0; ic < c; ++ic) {
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            double acc = 0.0;
                            for (std::int64_t in = 0; in < n; ++in) {
                                const float* src = pin + (in * c + ic) * ih * iw;
                                const float* gout = g + (in * k + ik) * oh * ow;
                                for (std::int64_t y = 0; y < oh; ++y) {
                                    std::int64_t sy = y * stride - pad + ky;
                                    if (sy < 0 || sy >= ih) continue;
                                    for (std::int64_t x = 0; x < ow; ++x) {
                                        std::int64_t sx = x * stride - pad + kx;
                                        if (sx < 0 || sx >= iw) continue;
                                        acc += static_cast<double>(gout[y * ow + x]) *
                                               src[sy * iw + sx];
                                    }
                                }
                            }
                            gw[((ik * c + ic) * kh + ky) * kw + kx] += static_cast<float>(acc);
                        }
                    }
                }
            }
        }
        if (tb.defined() && wants_grad(tb)) {
            float* gb = grad_of(tb).data();
            for (std::int64_t ik = 0; ik < k; ++ik) {
                double acc = 0.0;
                for (std::int64_t in = 0; in < n; ++in) {
                    const float* gout = g + (in * k + ik) * oh * ow;
                    for (std::int64_t i = 0; i < oh * ow; ++i) acc += gout[i];
                }
                gb[ik] += static_cast<float>(acc);
            }
        }
    };
    std::vector<Tensor> inputs{input, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_node({n, k, oh, ow}, std::move(out), inputs, std::move(bw));
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    check_inputs({&x, &weight, &bias}, "linear");
    if (x.rank() != 2 || weight.rank() != 2)
        throw ShapeError("linear expects rank-2 input/weight, got " + shape_str(x.shape()) +
                         " / " + shape_str(weight.shape()));
    std::int64_t n = x.dim(0), c = x.dim(1), o = weight.dim(0);
    if (weight.dim(1) != c)
        throw ShapeError("linear: input width " + std::to_string(c) + " != weight width " +
                         std::to_string(weight.dim(1)));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o))
        throw ShapeError("linear: bad bias shape " + shape_str(bias.shape()));
    std::vector<float> out(static_cast<std::size_t>(n * o));
    const float* px = x.data();
    const float* pw = weight.data();
    const float* pb = bias.defined() ? bias.data() : nullptr;
    for (std::int64_t in = 0; in < n; ++in)
        for (std::int64_t io = 0; io < o; ++io) {
            double acc = pb ? pb[io] : 0.0;
            for (std::int64_t ic = 0; ic < c; ++ic)
                acc += static_cast<double>(px[in * c + ic]) * pw[io * c + ic];
            out[in * o + io] = static_cast<float>(acc);
        }
    Tensor tx = x, tw = weight, tb = bias;
    auto bw = [tx, tw, tb, n, c, o](TensorImpl& node) {
        const float* g = node.grad.data();
        if (wants_grad(tx)) {
            float* gx = grad_of(tx).data();
            const float* pw = tw.data();
            for (std::int64_t in = 0; in < n; ++in)
                for (std::int64_t ic = 0; ic < c; ++ic) {
                    double acc = 0.0;
                    for (std::int64_t io = 0; io < o; ++io)
                        acc += static_cast<double>(g[in * o + io]) * pw[io * c + ic];
                    gx[in * c + ic] += static_cast<float>(acc);
                }
        }
        if (wants_grad(tw)) {
            float* gw = grad_of(tw).data();
            const float* px = tx.data();
            for (std::int64_t io = 0; io < o; ++io)
                for (std::int64_t ic = 0; ic < c; ++ic) {
                    double acc = 0.0;
                    for (std::int64_t in = 0; in < n; ++in)
                        acc += static_cast<double>(g[in * o + io]) * px[in * c + ic];
                    gw[io * c + ic] += static_cast<float>(acc);
                }
        }
        if (tb.defined() && wants_grad(tb)) {
            float* gb = grad_of(tb).data();
            for (std::int64_t io = 0; io < o; ++io) {
                double acc = 0.0;
                for (std::int64_t in = 0; in < n; ++in) acc += g[in * o + io];
                gb[io] += static_cast<float>(acc);
            }
        }
    };
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_node({n, o}, std::move(out), inputs, std::move(bw));
}

namespace {

struct Lerp {
    std::int64_t i0, i1;
    float w0, w1;
};

// align-corners=false: src = (dst + 0.5) * in/out - 0.5, clamped to the
// valid index range.
std::vector<Lerp> resize_axis(std::int64_t in, std::int64_t out) {
    std::vector<Lerp> v(static_cast<std::size_t>(out));
    double r = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t i = 0; i < out; ++i) {
        double src = (static_cast<double>(i) + 0.5) * r - 0.5;
        double f = std::floor(src);
        std::int64_t i0 = static_cast<std::int64_t>(f);
        double frac = src - f;
        std::int64_t i1 = i0 + 1;
        i0 = std::clamp<std::int64_t>(i0, 0, in - 1);
        i1 = std::clamp<std::int64_t>(i1, 0, in - 1);
        v[i] = {i0, i1, static_cast<float>(1.0 - frac), static_cast<float>(frac)};
    }
    return v;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, std::int64_t out_h, std::int64_t out_w) {
    check_inputs({&input}, "bilinear_resize");
    if (input.rank() != 4)
        throw ShapeError("bilinear_resize expects rank-4, got " + shape_str(input.shape()));
    if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: zero-sized target");
    std::int64_t n = input.dim(0), c = input.dim(1), ih = input.dim(2), iw = input.dim(3);
    auto ly = resize_axis(ih, out_h);
    auto lx = resize_axis(iw, out_w);
    std::vector<float> out(static_cast<std::size_t>(n * c * out_h * out_w));
    const float* pin = input.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t nc = 0; nc < n * c; ++nc) {
        const float* src = pin + nc * ih * iw;
        float* dst = out.data() + nc * out_h * out_w;
        for (std::int64_t y = 0; y < out_h; ++y) {
            const Lerp& ry = ly[y];
            for (std::int64_t x = 0; x < out_w; ++x) {
                const Lerp& rx = lx[x];
                float top = src[ry.i0 * iw + rx.i0] * rx.w0 + src[ry.i0 * iw + rx.i1] * rx.w1;
                float bot = src[ry.i1 * iw + rx.i0] * rx.w0 + src[ry.i1 * iw + rx.i1] * rx.w1;
                dst[y * out_w + x] = top * ry.w0 + bot * ry.w1;
            }
        }
    }
    Tensor tin = input;
    return make_node({n, c, out_h, out_w}, std::move(out), {input},
                     [tin, ly, lx, n, c, ih, iw, out_h, out_w](TensorImpl& node) {
                         if (!wants_grad(tin)) return;
                         float* gin = grad_of(tin).data();
                         const float* g = node.grad.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                         for (std::int64_t nc = 0; nc < n * c; ++nc) {
                             float* gdst = gin + nc * ih * iw;
                             const float* gsrc = g + nc * out_h * out_w;
                             for (std::int64_t y = 0; y < out_h; ++y) {
                                 const Lerp& ry = ly[y];
                                 for (std::int64_t x = 0; x < out_w; ++x) {
                                     const Lerp& rx = lx[x];
                                     float gv = gsrc[y * out_w + x];
                                     gdst[ry.i0 * iw + rx.i0] += gv * ry.w0 * rx.w0;
                                     gdst[ry.i0 * iw + rx.i1] += gv * ry.w0 * rx.w1;
                                     gdst[ry.i1 * iw + rx.i0] += gv * ry.w1 * rx.w0;
                                     gdst[ry.i1 * iw + rx.i1] += gv * ry.w1 * rx.w1;
                                 }
                             }
                         }
                     });
}

Tensor avg_pool2(const Tensor& input) {
    check_inputs({&input}, "avg_pool2");
    if (input.rank() != 4)
        throw ShapeError("avg_pool2 expects rank-4, got " + shape_str(input.shape()));
    std::int64_t n = input.dim(0), c = input.dim(1), ih = input.dim(2), iw = input.dim(3);
    if (ih % 2 != 0 || iw % 2 != 0)
        throw ShapeError("avg_pool2: spatial extents must be even, got " + shape_str(input.shape()));
    std::int64_t oh = ih / 2, ow = iw / 2;
    std::vector<float> out(static_cast<std::size_t>(n * c * oh * ow));
    const float* pin = input.data();
    for (std::int64_t nc = 0; nc < n * c; ++nc) {
        const float* src = pin + nc * ih * iw;
        float* dst = out.data() + nc * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y)
            for (std::int64_t x = 0; x < ow; ++x)
                dst[y * ow + x] = 0.25f * (src[(2 * y) * iw + 2 * x] + src[(2 * y) * iw + 2 * x + 1] +
                                           src[(2 * y + 1) * iw + 2 * x] +
                                           src[(2 * y + 1) * iw + 2 * x + 1]);
    }
    Tensor tin = input;
    return make_node({n, c, oh, ow}, std::move(out), {input},
                     [tin, n, c, ih, iw, oh, ow](TensorImpl& node) {
                         if (!wants_grad(tin)) return;
                         float* gin = grad_of(tin).data();
                         const float* g = node.grad.data();
                         for (std::int64_t nc = 0; nc < n * c; ++nc) {
                             float* gdst = gin + nc * ih * iw;
                             const float* gsrc = g + nc * oh * ow;
                             for (std::int64_t y = 0; y < oh; ++y)
                                 for (std::int64_t x = 0; x < ow; ++x) {
                                     float gv = 0.25f * gsrc[y * ow + x];
                                     gdst[(2 * y) * iw + 2 * x] += gv;
                                     gdst[(2 * y) * iw + 2 * x + 1] += gv;
                                     gdst[(2 * y + 1) * iw + 2 * x] += gv;
                                     gdst[(2 * y + 1) * iw + 2 * x + 1] += gv;
                                 }
                         }
                     });
}

Tensor pool_stats(const Tensor& input, PoolKind kind) {
    check_inputs({&input}, "pool_stats");
    if (input.rank() != 4)
        throw ShapeError("pool_stats expects rank-4, got " + shape_str(input.shape()));
    std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    std::int64_t plane = h * w;
    const float* pin = input.data();
    Tensor tin = input;

    if (kind == PoolKind::global_avg) {
        std::vector<float> out(static_cast<std::size_t>(n * c));
        for (std::int64_t nc = 0; nc < n * c; ++nc) {
            double acc = 0.0;
            const float* src = pin + nc * plane;
            for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
            out[nc] = static_cast<float>(acc / static_cast<double>(plane));
        }
        return make_node({n, c}, std::move(out), {input}, [tin, n, c, plane](TensorImpl& node) {
            if (!wants_grad(tin)) return;
            float* gin = grad_of(tin).data();
            const float* g = node.grad.data();
            float inv = 1.0f / static_cast<float>(plane);
            for (std::int64_t nc = 0; nc < n * c; ++nc) {
                float gv = g[nc] * inv;
                float* gdst = gin + nc * plane;
                for (std::int64_t i = 0; i < plane; ++i) gdst[i] += gv;
            }
        });
    }

    std::vector<float> out(static_cast<std::size_t>(n * plane));
    if (kind == PoolKind::channel_avg) {
        for (std::int64_t in = 0; in < n; ++in)
            for (std::int64_t i = 0; i < plane; ++i) {
                double acc = 0.0;
                for (std::int64_t ic = 0; ic < c; ++ic) acc += pin[(in * c + ic) * plane + i];
                out[in * plane + i] = static_cast<float>(acc / static_cast<double>(c));
            }
        return make_node({n, 1, h, w}, std::move(out), {input}, [tin, n, c, plane](TensorImpl& node) {
            if (!wants_grad(tin)) return;
            float* gin = grad_of(tin).data();
            const float* g = node.grad.data();
            float inv = 1.0f / static_cast<float>(c);
            for (std::int64_t in = 0; in < n; ++in)
                for (std::int64_t i = 0; i < plane; ++i) {
                    float gv = g[in * plane + i] * inv;
                    for (std::int64_t ic = 0; ic < c; ++ic) gin[(in * c + ic) * plane + i] += gv;
                }
        });
    }

    // channel_max; ties break to the lowest channel index.
    std::vector<std::int32_t> argmax(static_cast<std::size_t>(n * plane));
    for (std::int64_t in = 0; in < n; ++in)
        for (std::int64_t i = 0; i < plane; ++i) {
            float best = pin[(in * c) * plane + i];
            std::int32_t bi = 0;
            for (std::int64_t ic = 1; ic < c; ++ic) {
                float v = pin[(in * c + ic) * plane + i];
                if (v > best) {
                    best = v;
                    bi = static_cast<std::int32_t>(ic);
                }
            }
            out[in * plane + i] = best;
            argmax[in * plane + i] = bi;
        }
    return make_node({n, 1, h, w}, std::move(out), {input},
                     [tin, argmax = std::move(argmax), n, c, plane](TensorImpl& node) {
                         if (!wants_grad(tin)) return;
                         float* gin = grad_of(tin).data();
                         const float* g = node.grad.data();
                         for (std::int64_t in = 0; in < n; ++in)
                             for (std::int64_t i = 0; i < plane; ++i)
                                 gin[(in * c + argmax[in * plane + i]) * plane + i] +=
                                     g[in * plane + i];
                     });
}

}  // namespace fid
