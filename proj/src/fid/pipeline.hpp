#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fid/albedo_net.hpp"
#include "fid/refine_translate.hpp"
#include "fid/synthetic.hpp"

namespace fid {

// Loaded three-stage inference pipeline: coarse albedo prediction, 2x
// refinement, and pass translation, assembled from one checkpoint.
class Pipeline {
public:
    static Pipeline from_checkpoint(const std::string& path);
    static Pipeline from_config(const RunConfig& cfg, ParamStore params);

    const RunConfig& config() const { return cfg_; }
    ParamStore& params() { return *params_; }

    // Image side length the pipeline consumes and produces.
    int resolution() const { return 2 * cfg_.model.input_res; }
    bool has_translator() const { return has_translator_; }

    // Full decomposition of a [3,R,R] image in [0,1]. Albedo comes from
    // Stages I-II; the five other passes from Stage III (which requires a
    // stage-3 checkpoint). Normals are renormalized to unit length. All
    // outputs are [0,1]-encoded; the mask is all-ones (no face segmentation
    // at inference time).
    IntrinsicStack decompose(const Tensor& input_rgb);

    // Stage I-II only: refined albedo in [0,1].
    Tensor predict_albedo(const Tensor& input_rgb);

private:
    RunConfig cfg_;
    std::shared_ptr<ParamStore> params_;
    std::shared_ptr<AlbedoNet> net_;
    std::shared_ptr<RefineNet> refiner_;
    std::shared_ptr<PassTranslator> translator_;
    bool has_translator_ = false;
};

// One per-run provenance record, written next to every command's outputs.
struct RunManifest {
    std::string command;
    std::string config_text;
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;
    std::string version = "facedecomp-1.0";
    std::string timestamp;  // ISO-8601 UTC

    std::string serialize() const;
    void write(const std::string& path) const;
};

RunManifest make_manifest(const std::string& command, const std::string& config_text,
                          std::uint64_t seed, std::vector<std::string> outputs);

}  // namespace fid
