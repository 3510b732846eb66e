#include "fid/refine_translate.hpp"

#include <cmath>

namespace fid {

namespace {

Tensor kaiming_conv(Shape shape, Rng& rng) {
    double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
    return Tensor::randn(shape, rng, static_cast<float>(std::sqrt(2.0 / fan_in)));
}

Tensor conv_layer(const Tensor& x, ParamStore& ps, const std::string& name, int stride, int pad) {
    return conv2d(x, ps.get(name + ".w"), ps.get(name + ".b"), stride, pad);
}

void create_conv(ParamStore& ps, const std::string& name, int out_ch, int in_ch, int k, Rng& rng) {
    ps.create(name + ".w", kaiming_conv({out_ch, in_ch, k, k}, rng));
    ps.create(name + ".b", Tensor::zeros({out_ch}));
}

}  // namespace

Tensor PassBundle::concat() const {
    return concat_channels({ao, normal, specular, translucency, raw_diffuse});
}

PassBundle PassBundle::split(const Tensor& fifteen_ch) {
    if (fifteen_ch.rank() != 4 || fifteen_ch.dim(1) != 15)
        throw ShapeError("pass bundle expects [N,15,H,W], got " + shape_str(fifteen_ch.shape()));
    PassBundle b;
    b.ao = slice_channels(fifteen_ch, 0, 3);
    b.normal = slice_channels(fifteen_ch, 3, 3);
    b.specular = slice_channels(fifteen_ch, 6, 3);
    b.translucency = slice_channels(fifteen_ch, 9, 3);
    b.raw_diffuse = slice_channels(fifteen_ch, 12, 3);
    return b;
}

Tensor renormalize_normals(const Tensor& normal_pass, const Tensor& mask) {
    if (normal_pass.rank() != 4 || normal_pass.dim(1) != 3)
        throw ShapeError("normal pass must be [N,3,H,W], got " + shape_str(normal_pass.shape()));
    if (mask.rank() != 4 || mask.dim(1) != 1 || mask.dim(2) != normal_pass.dim(2) ||
        mask.dim(3) != normal_pass.dim(3))
        throw ShapeError("mask must be [*,1,H,W] matching the normal pass, got " +
                         shape_str(mask.shape()));
    if (mask.dim(0) != 1 && mask.dim(0) != normal_pass.dim(0))
        throw ShapeError("mask batch dim must be 1 or match the normal pass");
    std::int64_t n = normal_pass.dim(0), h = normal_pass.dim(2), w = normal_pass.dim(3);
    std::int64_t plane = h * w;
    Tensor out = normal_pass.detached().clone();
    float* p = out.data();
    const float* m = mask.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const float* mi = m + (mask.dim(0) == 1 ? 0 : i * plane);
        float* base = p + i * 3 * plane;
        for (std::int64_t s = 0; s < plane; ++s) {
            if (mi[s] <= 0.5f) continue;
            double x = base[s], y = base[plane + s], z = base[2 * plane + s];
            double len = std::sqrt(x * x + y * y + z * z);
            if (len < 1e-8) {
                // Degenerate vector: point it at the viewer.
                base[s] = 0.0f;
                base[plane + s] = 0.0f;
                base[2 * plane + s] = 1.0f;
                continue;
            }
            base[s] = static_cast<float>(x / len);
            base[plane + s] = static_cast<float>(y / len);
            base[2 * plane + s] = static_cast<float>(z / len);
        }
    }
    return out;
}

RefineNet::RefineNet(int scale_div) {
    if (scale_div < 1) throw ConfigError("refine scale_div must be >= 1");
    hidden_ = std::max(4, (192 + scale_div - 1) / scale_div);
}

void RefineNet::init_params(ParamStore& ps, Rng& rng) const {
    create_conv(ps, "s2.c0", hidden_, 3, 3, rng);
    create_conv(ps, "s2.c1", hidden_, hidden_, 3, rng);
    create_conv(ps, "s2.c2", hidden_, hidden_, 3, rng);
    create_conv(ps, "s2.out", 3, hidden_, 1, rng);
}

Tensor RefineNet::forward(const Tensor& albedo, ParamStore& ps) const {
    if (albedo.rank() != 4 || albedo.dim(1) != 3)
        throw ShapeError("refiner expects [N,3,H,W], got " + shape_str(albedo.shape()));
    Tensor h = bilinear_resize(albedo, albedo.dim(2) * 2, albedo.dim(3) * 2);
    h = relu(conv_layer(h, ps, "s2.c0", 1, 1));
    h = relu(conv_layer(h, ps, "s2.c1", 1, 1));
    h = relu(conv_layer(h, ps, "s2.c2", 1, 1));
    return clamp(conv_layer(h, ps, "s2.out", 1, 0), -1.0f, 1.0f);
}

std::vector<TraceRow> RefineNet::trace(int input_res) const {
    int r2 = input_res * 2;
    return {
        {"R", "Upsample", 3, 3, input_res, r2},
        {"R", "Conv 3x3", 3, hidden_, r2, r2},
        {"R", "Conv 3x3", hidden_, hidden_, r2, r2},
        {"R", "Conv 3x3", hidden_, hidden_, r2, r2},
        {"R", "Conv 1x1+Clamp", hidden_, 3, r2, r2},
    };
}

PassTranslator::PassTranslator(TranslatorConfig config) : config_(config) {
    config_.validate();
}

void PassTranslator::init_params(ParamStore& ps, Rng& rng) const {
    int b = config_.base();
    create_conv(ps, "s3.gen.stem", b, 3, 3, rng);
    int ch = b;
    for (int i = 0; i < config_.num_downsamples; ++i) {
        create_conv(ps, "s3.gen.down" + std::to_string(i), ch * 2, ch, 3, rng);
        ch *= 2;
    }
    for (int i = 0; i < config_.num_res_blocks; ++i) {
        std::string p = "s3.gen.res" + std::to_string(i);
        create_conv(ps, p + ".c0", ch, ch, 3, rng);
        create_conv(ps, p + ".c1", ch, ch, 3, rng);
    }
    for (int i = 0; i < config_.num_downsamples; ++i) {
        create_conv(ps, "s3.gen.up" + std::to_string(i), ch / 2, ch, 3, rng);
        ch /= 2;
    }
    create_conv(ps, "s3.gen.head", 15, ch, 3, rng);
}

Tensor PassTranslator::forward_raw(const Tensor& albedo, ParamStore& ps) const {
    if (albedo.rank() != 4 || albedo.dim(1) != 3)
        throw ShapeError("translator expects [N,3,H,W], got " + shape_str(albedo.shape()));
    std::int64_t stride = std::int64_t{1} << config_.num_downsamples;
    if (albedo.dim(2) % stride != 0 || albedo.dim(3) % stride != 0)
        throw ShapeError("translator input extent must be divisible by " + std::to_string(stride));
    Tensor h = relu(conv_layer(albedo, ps, "s3.gen.stem", 1, 1));
    for (int i = 0; i < config_.num_downsamples; ++i)
        h = relu(conv_layer(h, ps, "s3.gen.down" + std::to_string(i), 2, 1));
    for (int i = 0; i < config_.num_res_blocks; ++i) {
        std::string p = "s3.gen.res" + std::to_string(i);
        Tensor r = conv_layer(relu(conv_layer(relu(h), ps, p + ".c0", 1, 1)), ps, p + ".c1", 1, 1);
        h = add(h, r);
    }
    for (int i = 0; i < config_.num_downsamples; ++i) {
        h = bilinear_resize(h, h.dim(2) * 2, h.dim(3) * 2);
        h = relu(conv_layer(h, ps, "s3.gen.up" + std::to_string(i), 1, 1));
    }
    return tanh_op(conv_layer(h, ps, "s3.gen.head", 1, 1));
}

PassBundle PassTranslator::forward(const Tensor& albedo, ParamStore& ps) const {
    return PassBundle::split(forward_raw(albedo, ps));
}

PatchDiscriminator::PatchDiscriminator(TranslatorConfig config) : config_(config) {
    config_.validate();
}

void PatchDiscriminator::init_params(ParamStore& ps, Rng& rng) const {
    int b = config_.base();
    for (int s = 0; s < config_.num_disc_scales; ++s) {
        std::string p = "s3.disc" + std::to_string(s);
        int ch = 18;
        int out = b;
        for (int i = 0; i < 4; ++i) {
            create_conv(ps, p + ".c" + std::to_string(i), out, ch, 3, rng);
            ch = out;
            out *= 2;
        }
        create_conv(ps, p + ".logit", 1, ch, 3, rng);
    }
}

std::vector<PatchDiscriminator::ScaleOut> PatchDiscriminator::forward(const Tensor& albedo,
                                                                      const PassBundle& bundle,
                                                                      ParamStore& ps) const {
    Tensor x = concat_channels({albedo, bundle.ao, bundle.normal, bundle.specular,
                                bundle.translucency, bundle.raw_diffuse});
    std::vector<ScaleOut> outs;
    for (int s = 0; s < config_.num_disc_scales; ++s) {
        if (s > 0) x = avg_pool2(x);
        std::string p = "s3.disc" + std::to_string(s);
        ScaleOut so;
        Tensor h = x;
        for (int i = 0; i < 4; ++i) {
            h = leaky_relu(conv_layer(h, ps, p + ".c" + std::to_string(i), 2, 1));
            so.features.push_back(h);
        }
        so.logits = conv_layer(h, ps, p + ".logit", 1, 1);
        outs.push_back(std::move(so));
    }
    return outs;
}

GanLosses gan_losses(const PassBundle& real_bundle, const PassBundle& fake_bundle,
                     const Tensor& albedo, const PatchDiscriminator& disc, ParamStore& ps) {
    PassBundle fake_detached;
    fake_detached.ao = fake_bundle.ao.detached();
    fake_detached.normal = fake_bundle.normal.detached();
    fake_detached.specular = fake_bundle.specular.detached();
    fake_detached.translucency = fake_bundle.translucency.detached();
    fake_detached.raw_diffuse = fake_bundle.raw_diffuse.detached();
    Tensor cond = albedo.detached();

    auto real_out = disc.forward(cond, real_bundle, ps);
    auto fake_d_out = disc.forward(cond, fake_detached, ps);
    // Generator terms see the real features without the D tape so FM
    // gradients flow through the fake path only.
    std::vector<Tensor> real_feats_fixed;
    for (const auto& so : real_out)
        for (const auto& f : so.features) real_feats_fixed.push_back(f.detached());
    auto fake_g_out = disc.forward(cond, fake_bundle, ps);

    Tensor d_loss, g_adv, fm;
    std::size_t feat_idx = 0;
    for (std::size_t s = 0; s < real_out.size(); ++s) {
        Tensor dr = mean(mul(add_scalar(real_out[s].logits, -1.0), add_scalar(real_out[s].logits, -1.0)));
        Tensor df = mean(mul(fake_d_out[s].logits, fake_d_out[s].logits));
        Tensor d_term = scale(add(dr, df), 0.5);
        d_loss = d_loss.defined() ? add(d_loss, d_term) : d_term;

        Tensor gm = add_scalar(fake_g_out[s].logits, -1.0);
        Tensor g_term = mean(mul(gm, gm));
        g_adv = g_adv.defined() ? add(g_adv, g_term) : g_term;

        for (const auto& ff : fake_g_out[s].features) {
            Tensor diff = mean(abs_op(sub(ff, real_feats_fixed[feat_idx++])));
            fm = fm.defined() ? add(fm, diff) : diff;
        }
    }
    double inv_scales = 1.0 / static_cast<double>(real_out.size());
    GanLosses out;
    out.d = scale(d_loss, inv_scales);
    out.g_adv = scale(g_adv, inv_scales);
    out.feature_matching = scale(fm, 1.0 / static_cast<double>(feat_idx));
    return out;
}

}  // namespace fid
