#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mcap/nn.hpp"

namespace mcap::num {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool ok = true;
};

// Compares analytic gradients against central finite differences,
// (f(x+eps) - f(x-eps)) / 2eps, entry by entry. `loss_fn` must zero nothing
// itself: it computes the scalar loss and accumulates gradients into the
// params (grad_check zeroes them before the analytic pass). The closure must
// be deterministic; two forward passes that disagree raise NumericError.
// Frozen params are skipped. Relative error is |a-n| / max(|a|,|n|,1e-8).
std::vector<GradCheckEntry> grad_check(const std::function<double()>& loss_fn,
                                       const std::vector<ParamTensor*>& params, double eps,
                                       double tol);

double max_rel_err(const std::vector<GradCheckEntry>& entries);

}  // namespace mcap::num
