#include "mcap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mcap::num {

std::vector<GradCheckEntry> grad_check(const std::function<double()>& loss_fn,
                                       const std::vector<ParamTensor*>& params, double eps,
                                       double tol) {
  for (ParamTensor* p : params) p->zero_grad();
  const double loss_a = loss_fn();
  for (ParamTensor* p : params) p->zero_grad();
  const double loss_b = loss_fn();
  if (loss_a != loss_b)
    throw NumericError("grad_check: closure is not deterministic (" + std::to_string(loss_a) +
                       " vs " + std::to_string(loss_b) + ")");

  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const ParamTensor* p : params) analytic.push_back(p->grad);

  std::vector<GradCheckEntry> out;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    ParamTensor* p = params[pi];
    GradCheckEntry entry{p->name, 0.0, true};
    if (!p->frozen) {
      for (size_t j = 0; j < p->value.size(); ++j) {
        const double orig = p->value.v[j];
        p->value.v[j] = orig + eps;
        const double f_plus = loss_fn();
        p->value.v[j] = orig - eps;
        const double f_minus = loss_fn();
        p->value.v[j] = orig;
        const double numeric = (f_plus - f_minus) / (2.0 * eps);
        const double a = analytic[pi].v[j];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        entry.max_rel_err = std::max(entry.max_rel_err, rel);
      }
    }
    entry.ok = entry.max_rel_err < tol;
    out.push_back(std::move(entry));
  }

  // Leave the analytic gradients in place for the caller.
  for (size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
  return out;
}

double max_rel_err(const std::vector<GradCheckEntry>& entries) {
  double mx = 0.0;
  for (const auto& e : entries) mx = std::max(mx, e.max_rel_err);
  return mx;
}

}  // namespace mcap::num
