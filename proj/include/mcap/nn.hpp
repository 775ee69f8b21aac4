#pragma once

#include <span>
#include <string>
#include <vector>

#include "mcap/matrix.hpp"
#include "mcap/rng.hpp"

namespace mcap::num {

// A learnable tensor paired with its gradient accumulator.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  ParamTensor() = default;
  ParamTensor(std::string n, int rows, int cols, bool froz = false)
      : name(std::move(n)), value(rows, cols), grad(rows, cols), frozen(froz) {}

  void zero_grad() { grad.zero(); }
};

// LSTM weight block. Gate rows are ordered input, forget, cell, output
// (the same order the checkpoint blob uses).
struct LstmWeights {
  Matrix w_x;  // 4H x D_in
  Matrix w_h;  // 4H x H
  Matrix b;    // 4H x 1

  LstmWeights() = default;
  LstmWeights(int hidden, int input_dim)
      : w_x(4 * hidden, input_dim), w_h(4 * hidden, hidden), b(4 * hidden, 1) {}

  int hidden() const { return w_h.cols; }
  int input_dim() const { return w_x.cols; }
};

// Everything the backward pass needs from one forward call.
struct LstmCache {
  Vec x, h_in, c_in;
  Vec gi, gf, gg, go;  // post-activation gates
  Vec c_out, tanh_c;
};

// One LSTM step: i,f,o sigmoid gates, g tanh candidate,
// c' = f*c + i*g, h' = o*tanh(c'). Pass a cache to enable backward.
void lstm_cell(const Matrix& w_x, const Matrix& w_h, const Matrix& b, std::span<const double> x,
               std::span<const double> h, std::span<const double> c, Vec& h_out, Vec& c_out,
               LstmCache* cache = nullptr);

// Exact gradients for one step. Adds into every output accumulator; callers
// zero dx/dh_in/dc_in themselves when they want plain values.
void lstm_cell_backward(const Matrix& w_x, const Matrix& w_h, const LstmCache& cache,
                        std::span<const double> dh_out, std::span<const double> dc_out,
                        Matrix& d_w_x, Matrix& d_w_h, Matrix& d_b, Vec& dx, Vec& dh_in,
                        Vec& dc_in);

// Max-subtracted softmax.
Vec softmax(std::span<const double> logits);

// log softmax via logsumexp; exp(log_softmax(v)) == softmax(v) up to rounding.
Vec log_softmax(std::span<const double> logits);

// Mean of -log(pred[t][target[t]]) over unmasked positions.
double cross_entropy(const std::vector<Vec>& pred, std::span<const int> targets,
                     std::span<const bool> mask);

// Inverted dropout: entries are 0 with probability `rate`, else 1/(1-rate).
Vec dropout_mask(int len, double rate, Rng& rng);

}  // namespace mcap::num
