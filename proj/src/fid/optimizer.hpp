#pragma once

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "fid/param_store.hpp"

namespace fid {

// Bias-corrected Adam. Moment buffers are keyed by parameter name and are
// serializable so a resumed run continues bit-exactly.
class Adam {
public:
    explicit Adam(float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);

    // Applies one update from the accumulated gradients. When `prefix` is
    // non-empty only parameters whose names start with it are touched (the
    // rest stay frozen and need no gradients).
    void step(ParamStore& params, float lr, const std::string& prefix = "");

    std::uint64_t step_count() const { return step_count_; }

    void save(std::ostream& os) const;
    static Adam load(std::istream& is);

private:
    float beta1_, beta2_, eps_;
    std::uint64_t step_count_ = 0;
    // Interleaved first/second moments per parameter, insertion-ordered for
    // stable serialization.
    std::vector<std::pair<std::string, std::vector<float>>> m_, v_;
    std::unordered_map<std::string, std::size_t> index_;

    std::size_t slot(const std::string& name, std::size_t numel);
};

// Cosine-annealed learning rate with warm restarts:
// lr_min + 0.5 (lr_init - lr_min) (1 + cos(pi t / T)), t = step mod T.
float cosine_restart_lr(std::int64_t step, std::int64_t steps_per_period, float lr_init,
                        float lr_min);

}  // namespace fid
