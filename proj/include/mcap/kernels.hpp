#pragma once

#include <span>

#include "mcap/matrix.hpp"

namespace mcap::num {

// Hot dense kernels. Each has a serial reference (the _serial variant) and an
// OpenMP version parallelized over output rows. Every output element is
// computed by exactly one thread with a fixed inner summation order, so the
// parallel results are bit-identical to the serial ones for any thread count.

// Process-wide switch; the dispatching entry points honor it.
void set_parallel(bool enabled);
bool parallel_enabled();

// y = W x  (y sized W.rows)
void matvec_serial(const Matrix& w, std::span<const double> x, double* y);
void matvec_omp(const Matrix& w, std::span<const double> x, double* y);
void matvec(const Matrix& w, std::span<const double> x, double* y);

// out += W^T g  (out sized W.cols)
void matvec_t_acc_serial(const Matrix& w, std::span<const double> g, double* out);
void matvec_t_acc_omp(const Matrix& w, std::span<const double> g, double* out);
void matvec_t_acc(const Matrix& w, std::span<const double> g, double* out);

// dw += g x^T
void outer_acc_serial(Matrix& dw, std::span<const double> g, std::span<const double> x);
void outer_acc_omp(Matrix& dw, std::span<const double> g, std::span<const double> x);
void outer_acc(Matrix& dw, std::span<const double> g, std::span<const double> x);

}  // namespace mcap::num
