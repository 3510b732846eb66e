#pragma once

#include <array>
#include <string>
#include <vector>

#include "fid/ops.hpp"

namespace fid {

// Procedural scene description. The seed determines geometry and material
// fields; the lighting fields are explicit so a scene can be re-lit without
// touching anything else.
struct SceneSpec {
    std::uint64_t seed = 0;
    std::array<float, 3> light_dir = {0.0f, 0.0f, 1.0f};  // unit, z > 0
    float light_intensity = 1.0f;                         // in [0.6, 1.4]
    float ambient = 0.15f;                                // in [0.05, 0.3]
};

// Ground-truth decomposition of one sample. Channel layout [3,R,R], values
// in [0,1]; normals are stored encoded as (n+1)/2; mask is [1,R,R] binary.
struct IntrinsicStack {
    Tensor albedo;
    Tensor normal;
    Tensor ao;
    Tensor specular;
    Tensor translucency;
    Tensor raw_diffuse;
    Tensor mask;
};

struct Sample {
    Tensor input_rgb;  // [3,R,R] in [0,1]
    IntrinsicStack stack;
    SceneSpec spec;
};

// Random scene parameters for a seed (geometry implied, lighting explicit).
SceneSpec make_scene_spec(std::uint64_t seed);

// Renders the sample for a spec: blob height field -> analytic normals,
// horizon-sampled ambient occlusion, procedural albedo/specular/translucency
// fields, then the shared shading model. Deterministic; geometry and
// materials depend only on spec.seed, the input image also on the lighting.
Sample generate_from_spec(const SceneSpec& spec, int resolution);
Sample generate(std::uint64_t seed, int resolution);

// Diagnostic variant: identical materials and lighting but a zero height
// field, so normals are (0,0,1) and ambient occlusion is 1 everywhere.
Sample generate_flat(const SceneSpec& spec, int resolution);

// Shared shading model: ambient + Lambert diffuse, Blinn-Phong specular
// lobe (exponent 24), albedo-tinted back-light rim for translucency.
// Rebuilding the input image from a generated stack under the stored light
// matches it exactly.
Tensor rerender(const IntrinsicStack& stack, const std::array<float, 3>& light_dir,
                float light_intensity, float ambient);

struct PerturbParams {
    int shift_x = 0;
    int shift_y = 0;
    float brightness = 1.0f;
    float saturation = 1.0f;
};

PerturbParams sample_perturbation(int max_shift_px, float photometric_frac, Rng& rng);
// Integer translation with edge replication, then saturation/brightness
// scaling, clamped to [0,1].
Tensor apply_perturbation(const Tensor& image, const PerturbParams& params);
Tensor perturb(const Tensor& image, int max_shift_px, float photometric_frac, Rng& rng);

struct DatasetSplit {
    std::vector<int> train, val, test;
};

// Deterministic 90/5/5 shuffle-split; val and test are floor(n/20) each
// (minimum 1), remainder goes to train. Requires n >= 20.
DatasetSplit dataset_split(int num_samples, std::uint64_t master_seed);

void write_split(const std::string& path, const DatasetSplit& split);
DatasetSplit read_split(const std::string& path);

// One directory per sample: input.ntf, albedo.ntf, normal.ntf, ao.ntf,
// specular.ntf, translucency.ntf, raw_diffuse.ntf, mask.ntf, spec.json.
void save_sample(const std::string& dir, const Sample& sample);
Sample load_sample(const std::string& dir);
std::string sample_dir(const std::string& root, int index);

// Generates n samples with per-sample seeds derived from master_seed and
// writes them plus split.txt under root.
void write_dataset(const std::string& root, int n, int resolution, std::uint64_t master_seed);

}  // namespace fid
