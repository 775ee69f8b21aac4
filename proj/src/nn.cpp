#include "mcap/nn.hpp"

#include <algorithm>
#include <cmath>

#include "mcap/kernels.hpp"

namespace mcap::num {

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

void lstm_cell(const Matrix& w_x, const Matrix& w_h, const Matrix& b, std::span<const double> x,
               std::span<const double> h, std::span<const double> c, Vec& h_out, Vec& c_out,
               LstmCache* cache) {
  const int four_h = w_x.rows;
  if (four_h % 4 != 0) throw ShapeError("lstm_cell: w_x rows not a multiple of 4");
  const int hidden = four_h / 4;
  if (w_h.rows != four_h || w_h.cols != hidden)
    throw ShapeError("lstm_cell: w_h shape inconsistent with w_x");
  if (b.rows != four_h || b.cols != 1) throw ShapeError("lstm_cell: b shape inconsistent with w_x");
  require_len(x.size(), static_cast<size_t>(w_x.cols), "lstm_cell: x");
  require_len(h.size(), static_cast<size_t>(hidden), "lstm_cell: h");
  require_len(c.size(), static_cast<size_t>(hidden), "lstm_cell: c");

  Vec z(four_h);
  matvec(w_x, x, z.data());
  Vec zh(four_h);
  matvec(w_h, h, zh.data());
  for (int j = 0; j < four_h; ++j) z[j] += zh[j] + b.v[j];

  h_out.assign(hidden, 0.0);
  c_out.assign(hidden, 0.0);
  Vec gi(hidden), gf(hidden), gg(hidden), go(hidden), tanh_c(hidden);
  for (int j = 0; j < hidden; ++j) {
    gi[j] = sigmoid(z[j]);
    gf[j] = sigmoid(z[hidden + j]);
    gg[j] = std::tanh(z[2 * hidden + j]);
    go[j] = sigmoid(z[3 * hidden + j]);
    c_out[j] = gf[j] * c[j] + gi[j] * gg[j];
    tanh_c[j] = std::tanh(c_out[j]);
    h_out[j] = go[j] * tanh_c[j];
  }

  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_in.assign(h.begin(), h.end());
    cache->c_in.assign(c.begin(), c.end());
    cache->gi = std::move(gi);
    cache->gf = std::move(gf);
    cache->gg = std::move(gg);
    cache->go = std::move(go);
    cache->c_out = c_out;
    cache->tanh_c = std::move(tanh_c);
  }
}

void lstm_cell_backward(const Matrix& w_x, const Matrix& w_h, const LstmCache& cache,
                        std::span<const double> dh_out, std::span<const double> dc_out,
                        Matrix& d_w_x, Matrix& d_w_h, Matrix& d_b, Vec& dx, Vec& dh_in,
                        Vec& dc_in) {
  const int hidden = w_h.cols;
  const int four_h = 4 * hidden;
  require_len(dh_out.size(), static_cast<size_t>(hidden), "lstm_cell_backward: dh_out");
  require_len(dc_out.size(), static_cast<size_t>(hidden), "lstm_cell_backward: dc_out");
  require_len(dx.size(), static_cast<size_t>(w_x.cols), "lstm_cell_backward: dx");
  require_len(dh_in.size(), static_cast<size_t>(hidden), "lstm_cell_backward: dh_in");
  require_len(dc_in.size(), static_cast<size_t>(hidden), "lstm_cell_backward: dc_in");

  Vec dz(four_h);
  for (int j = 0; j < hidden; ++j) {
    const double i = cache.gi[j], f = cache.gf[j], g = cache.gg[j], o = cache.go[j];
    const double tc = cache.tanh_c[j];
    const double d_o = dh_out[j] * tc;
    const double dc_total = dc_out[j] + dh_out[j] * o * (1.0 - tc * tc);
    const double d_i = dc_total * g;
    const double d_f = dc_total * cache.c_in[j];
    const double d_g = dc_total * i;
    dc_in[j] += dc_total * f;
    dz[j] = d_i * i * (1.0 - i);
    dz[hidden + j] = d_f * f * (1.0 - f);
    dz[2 * hidden + j] = d_g * (1.0 - g * g);
    dz[3 * hidden + j] = d_o * o * (1.0 - o);
  }

  outer_acc(d_w_x, dz, cache.x);
  outer_acc(d_w_h, dz, cache.h_in);
  for (int j = 0; j < four_h; ++j) d_b.v[j] += dz[j];
  matvec_t_acc(w_x, dz, dx.data());
  matvec_t_acc(w_h, dz, dh_in.data());
}

Vec softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error("softmax: empty input");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double sum = 0.0;
  for (size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp(logits[j] - mx);
    sum += out[j];
  }
  for (double& p : out) p /= sum;
  return out;
}

Vec log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error("log_softmax: empty input");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  Vec out(logits.size());
  for (size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] - lse;
  return out;
}

double cross_entropy(const std::vector<Vec>& pred, std::span<const int> targets,
                     std::span<const bool> mask) {
  if (pred.size() != targets.size() || pred.size() != mask.size())
    throw ShapeError("cross_entropy: sequence lengths differ");
  double sum = 0.0;
  long long n = 0;
  for (size_t t = 0; t < pred.size(); ++t) {
    if (!mask[t]) continue;
    const int target = targets[t];
    if (target < 0 || static_cast<size_t>(target) >= pred[t].size())
      throw ShapeError("cross_entropy: target id out of range at step " + std::to_string(t));
    sum += -std::log(pred[t][target]);
    ++n;
  }
  if (n == 0) throw Error("cross_entropy: all positions masked");
  return sum / static_cast<double>(n);
}

Vec dropout_mask(int len, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout_mask: rate must be in [0,1)");
  Vec mask(len, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int j = 0; j < len; ++j) mask[j] = rng.uniform(0.0, 1.0) < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace mcap::num
