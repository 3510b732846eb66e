#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fid/param_store.hpp"

namespace fid {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::int64_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    bool passed(double rel_tol) const { return max_rel_error < rel_tol; }
};

// Compares autodiff gradients of f against central finite differences.
// f must be deterministic; this is verified by evaluating it twice at the
// baseline and requiring bit-identical results. samples_per_param bounds
// the number of elements probed per tensor (0 = all); probe positions are
// drawn from a fixed stream so reports are reproducible.
GradCheckReport grad_check(const std::function<Tensor(ParamStore&)>& f, ParamStore& params,
                           double eps, double rel_tol, std::int64_t samples_per_param = 0);

}  // namespace fid
