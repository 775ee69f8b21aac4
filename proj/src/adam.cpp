#include "mcap/adam.hpp"

#include <cmath>

namespace mcap::num {

void AdamState::init(const std::vector<ParamTensor*>& params, AdamConfig config) {
  cfg = config;
  t = 0;
  slots.clear();
  for (const ParamTensor* p : params) {
    if (p->frozen) continue;
    Slot s;
    s.m = Matrix(p->value.rows, p->value.cols);
    s.v = Matrix(p->value.rows, p->value.cols);
    slots.push_back(std::move(s));
  }
}

void adam_step(const std::vector<ParamTensor*>& params, AdamState& state, double lr) {
  if (lr <= 0.0) throw Error("adam_step: lr must be positive");
  state.t += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2, eps = state.cfg.eps;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));

  size_t slot = 0;
  for (ParamTensor* p : params) {
    if (p->frozen) continue;
    if (slot >= state.slots.size()) throw ShapeError("adam_step: state/params mismatch");
    AdamState::Slot& s = state.slots[slot++];
    if (!s.m.same_shape(p->value))
      throw ShapeError("adam_step: moment shape mismatch for " + p->name);
    for (size_t j = 0; j < p->value.size(); ++j) {
      const double g = p->grad.v[j];
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in " + p->name);
      s.m.v[j] = b1 * s.m.v[j] + (1.0 - b1) * g;
      s.v.v[j] = b2 * s.v.v[j] + (1.0 - b2) * g * g;
      const double m_hat = s.m.v[j] / corr1;
      const double v_hat = s.v.v[j] / corr2;
      p->value.v[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    p->zero_grad();
  }
  if (slot != state.slots.size()) throw ShapeError("adam_step: state/params mismatch");
}

}  // namespace mcap::num
