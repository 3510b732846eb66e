#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fid/common.hpp"

namespace fid {

// Stage I architecture hyper-parameters. Channel widths follow the
// six-level reference layout (64,128,256,256,384,512 with a 512-wide
// bottleneck); scale_div shrinks widths for desk-scale runs with ceil
// division and a floor of 4 channels.
struct ModelConfig {
    int levels = 6;
    std::vector<int> base_widths = {64, 128, 256, 256, 384, 512, 512};  // levels+1 entries
    int scale_div = 1;
    int attn_reduction = 8;
    int input_res = 512;  // encoder working resolution; dataset images are 2x this

    // Effective width of encoder level l in [0, levels]; index `levels` is
    // the bottleneck.
    int width(int level) const;
    int bottleneck_res() const { return input_res >> levels; }
    void validate() const;

    static ModelConfig desk_scale();  // R=64 data, 32-px encoder, /8 widths
};

// Receptive-field side length at the bottleneck via r <- r + (k-1)*j,
// j <- j*stride over the encoder layer sequence (1x1 stem, then per level
// three 3x3 convs and one stride-2 3x3 downconv).
int receptive_field(const ModelConfig& config);

struct TranslatorConfig {
    int gen_base_channels = 64;
    int num_downsamples = 3;
    int num_res_blocks = 6;
    int num_disc_scales = 2;
    int scale_div = 1;

    int base() const;  // gen_base_channels after scale_div, floor 4
    void validate() const;
};

struct LossWeights {
    float alpha = 1.0f;
    float beta = 10.5f;
    float gamma = 5.0f;
    float delta = 1.2f;
};

struct TrainConfig {
    float lr_init = 5e-5f;
    float lr_min = 1e-6f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    int epochs_stage12 = 60;
    int epochs_stage3 = 30;
    int batch_size = 2;
    int restart_period_epochs = 0;  // 0 = one period spanning the whole run
    std::uint64_t master_seed = 0;
    LossWeights weights;

    void validate() const;
};

// Everything a run needs, parsed from one flat key=value config file.
struct RunConfig {
    ModelConfig model;
    TranslatorConfig translator;
    TrainConfig trainer;

    std::string serialize() const;
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);

    // Field-by-field differences in the architecture-relevant subset;
    // empty means checkpoints are interchangeable.
    static std::vector<std::string> architecture_diff(const RunConfig& a, const RunConfig& b);
};

}  // namespace fid
