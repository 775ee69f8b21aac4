#pragma once

#include <vector>

#include "mcap/nn.hpp"

namespace mcap::num {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter first/second moment accumulators plus the shared step counter.
struct AdamState {
  struct Slot {
    Matrix m, v;
  };
  std::vector<Slot> slots;
  long long t = 0;
  AdamConfig cfg;

  // Slots mirror the non-frozen params, in order.
  void init(const std::vector<ParamTensor*>& params, AdamConfig config = {});
};

// Bias-corrected Adam update over the non-frozen params; gradients are zeroed
// afterward. Throws NumericError naming the parameter on a non-finite gradient.
void adam_step(const std::vector<ParamTensor*>& params, AdamState& state, double lr);

}  // namespace mcap::num
