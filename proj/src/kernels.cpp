#include "mcap/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mcap::num {

namespace {
std::atomic<bool> g_parallel{true};

// Below this many row-dot flops the fork/join overhead dominates.
constexpr size_t kMinParallelWork = 64 * 1024;

bool in_parallel_region() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}
}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

void matvec_serial(const Matrix& w, std::span<const double> x, double* y) {
  require_len(x.size(), static_cast<size_t>(w.cols), "matvec: x");
  for (int r = 0; r < w.rows; ++r) {
    const double* wr = w.row(r);
    double acc = 0.0;
    for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void matvec_omp(const Matrix& w, std::span<const double> x, double* y) {
  require_len(x.size(), static_cast<size_t>(w.cols), "matvec: x");
#pragma omp parallel for schedule(static)
  for (int r = 0; r < w.rows; ++r) {
    const double* wr = w.row(r);
    double acc = 0.0;
    for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void matvec(const Matrix& w, std::span<const double> x, double* y) {
  if (g_parallel.load() && !in_parallel_region() && w.size() >= kMinParallelWork)
    matvec_omp(w, x, y);
  else
    matvec_serial(w, x, y);
}

void matvec_t_acc_serial(const Matrix& w, std::span<const double> g, double* out) {
  require_len(g.size(), static_cast<size_t>(w.rows), "matvec_t_acc: g");
  for (int c = 0; c < w.cols; ++c) {
    double acc = 0.0;
    for (int r = 0; r < w.rows; ++r) acc += w.at(r, c) * g[r];
    out[c] += acc;
  }
}

void matvec_t_acc_omp(const Matrix& w, std::span<const double> g, double* out) {
  require_len(g.size(), static_cast<size_t>(w.rows), "matvec_t_acc: g");
#pragma omp parallel for schedule(static)
  for (int c = 0; c < w.cols; ++c) {
    double acc = 0.0;
    for (int r = 0; r < w.rows; ++r) acc += w.at(r, c) * g[r];
    out[c] += acc;
  }
}

void matvec_t_acc(const Matrix& w, std::span<const double> g, double* out) {
  if (g_parallel.load() && !in_parallel_region() && w.size() >= kMinParallelWork)
    matvec_t_acc_omp(w, g, out);
  else
    matvec_t_acc_serial(w, g, out);
}

void outer_acc_serial(Matrix& dw, std::span<const double> g, std::span<const double> x) {
  require_len(g.size(), static_cast<size_t>(dw.rows), "outer_acc: g");
  require_len(x.size(), static_cast<size_t>(dw.cols), "outer_acc: x");
  for (int r = 0; r < dw.rows; ++r) {
    double* dr = dw.row(r);
    const double gr = g[r];
    for (int c = 0; c < dw.cols; ++c) dr[c] += gr * x[c];
  }
}

void outer_acc_omp(Matrix& dw, std::span<const double> g, std::span<const double> x) {
  require_len(g.size(), static_cast<size_t>(dw.rows), "outer_acc: g");
  require_len(x.size(), static_cast<size_t>(dw.cols), "outer_acc: x");
#pragma omp parallel for schedule(static)
  for (int r = 0; r < dw.rows; ++r) {
    double* dr = dw.row(r);
    const double gr = g[r];
    for (int c = 0; c < dw.cols; ++c) dr[c] += gr * x[c];
  }
}

void outer_acc(Matrix& dw, std::span<const double> g, std::span<const double> x) {
  if (g_parallel.load() && !in_parallel_region() && dw.size() >= kMinParallelWork)
    outer_acc_omp(dw, g, x);
  else
    outer_acc_serial(dw, g, x);
}

}  // namespace mcap::num
