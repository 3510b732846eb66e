#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fid/model_config.hpp"
#include "fid/param_store.hpp"
#include "fid/synthetic.hpp"

namespace fid {

// In-memory training set: samples indexed by the dataset split.
struct LoadedDataset {
    std::vector<Sample> samples;  // indexed by dataset position
    DatasetSplit split;
    int resolution = 0;
};

LoadedDataset load_dataset(const std::string& root);

struct TrainResult {
    double best_val = 0.0;
    std::vector<double> step_losses;  // training objective per optimizer step
    std::vector<double> val_curve;    // validation criterion per epoch
    std::uint64_t frozen_hash_before = 0;  // stage-3 freeze contract bookkeeping
    std::uint64_t frozen_hash_after = 0;
};

// Joint Stage I-II optimization with the four-term objective. Writes the
// best-validation checkpoint to `out_ckpt` and a resumable training state
// to `out_ckpt + ".state"`. If the state file already exists the run
// resumes from it and continues bit-exactly. `stop_after_epochs` > 0 ends
// the process early after that many epochs of this invocation (for
// resume testing and incremental runs); the schedule itself always spans
// cfg.trainer.epochs_stage12.
TrainResult train_stage12(const LoadedDataset& data, const RunConfig& cfg,
                          const std::string& out_ckpt, std::ostream* log,
                          int stop_after_epochs = 0);

// Stage III adversarial fine-tuning on top of a Stage I-II checkpoint.
// Stage I-II parameters are frozen (bit-identical before and after).
TrainResult train_stage3(const LoadedDataset& data, const RunConfig& cfg,
                         const std::string& init_ckpt, const std::string& out_ckpt,
                         std::ostream* log, int stop_after_epochs = 0);

// FNV-1a hash over the entries whose names start with `prefix`.
std::uint64_t prefix_hash(const ParamStore& ps, const std::string& prefix);

// [0,1] image data to the [-1,1] model encoding and back. Detached.
Tensor to_signed(const Tensor& t);
Tensor to_unit(const Tensor& t);

}  // namespace fid
