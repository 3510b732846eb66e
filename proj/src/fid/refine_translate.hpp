#pragma once

#include <vector>

#include "fid/albedo_net.hpp"
#include "fid/model_config.hpp"
#include "fid/ops.hpp"
#include "fid/param_store.hpp"

namespace fid {

// The five predicted rendering passes, each [N,3,R,R] in [-1,1], at the
// resolution of the conditioning albedo. Channel split order is fixed:
// [AO, normal, specular, translucency, raw_diffuse].
struct PassBundle {
    Tensor ao;
    Tensor normal;
    Tensor specular;
    Tensor translucency;
    Tensor raw_diffuse;

    Tensor concat() const;
    static PassBundle split(const Tensor& fifteen_ch);
    std::vector<const Tensor*> all() const { return {&ao, &normal, &specular, &translucency, &raw_diffuse}; }
};

// Rescales the [-1,1]-encoded normal vectors to unit length wherever
// mask > 0.5 (mask: [N,1,R,R] or [1,1,R,R]). Pure data post-process;
// idempotent. Returns a detached tensor.
Tensor renormalize_normals(const Tensor& normal_pass, const Tensor& mask);

// Stage II: bilinear 2x upsample followed by conv3x3+ReLU, conv3x3+ReLU,
// conv1x1, output clamped to [-1,1]. Parameters under "s2.".
class RefineNet {
public:
    explicit RefineNet(int scale_div);
    void init_params(ParamStore& ps, Rng& rng) const;
    Tensor forward(const Tensor& albedo, ParamStore& ps) const;
    int hidden_channels() const { return hidden_; }
    std::vector<TraceRow> trace(int input_res) const;

private:
    int hidden_;
};

// Stage III generator: coarse-to-fine 3->15 translator. Parameters under
// "s3.gen.".
class PassTranslator {
public:
    explicit PassTranslator(TranslatorConfig config);
    const TranslatorConfig& config() const { return config_; }
    void init_params(ParamStore& ps, Rng& rng) const;
    Tensor forward_raw(const Tensor& albedo, ParamStore& ps) const;  // [N,15,R,R]
    PassBundle forward(const Tensor& albedo, ParamStore& ps) const;

private:
    TranslatorConfig config_;
};

// Multi-scale patch discriminator over the 18-channel albedo⊕passes stack.
// Parameters under "s3.disc.".
class PatchDiscriminator {
public:
    explicit PatchDiscriminator(TranslatorConfig config);
    void init_params(ParamStore& ps, Rng& rng) const;

    struct ScaleOut {
        Tensor logits;                 // [N,1,h,w]
        std::vector<Tensor> features;  // post-activation maps, one per conv layer
    };
    std::vector<ScaleOut> forward(const Tensor& albedo, const PassBundle& bundle,
                                  ParamStore& ps) const;

private:
    TranslatorConfig config_;
};

struct GanLosses {
    Tensor g_adv;
    Tensor d;
    Tensor feature_matching;
};

// Least-squares adversarial objective (D targets 1 on real, 0 on fake;
// G targets 1) plus discriminator feature matching (mean absolute feature
// difference, averaged over layers and scales). The fake bundle must carry
// its generator tape; detaching for the D term happens internally.
GanLosses gan_losses(const PassBundle& real_bundle, const PassBundle& fake_bundle,
                     const Tensor& albedo, const PatchDiscriminator& disc, ParamStore& ps);

}  // namespace fid
