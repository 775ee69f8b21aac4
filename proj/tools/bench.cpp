// mcap-bench: timing harness for the dense kernels and the training hot path.
// Runs each kernel serial and OpenMP-parallel on the same inputs, checks the
// outputs are bit-identical, and reports wall times side by side.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mcap/kernels.hpp"
#include "mcap/matrix.hpp"
#include "mcap/model.hpp"
#include "mcap/rng.hpp"
#include "mcap/text.hpp"
#include "mcap/train.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

mcap::num::Matrix random_matrix(int r, int c, mcap::Rng& rng) {
  mcap::num::Matrix m(r, c);
  for (double& x : m.v) x = rng.uniform(-1.0, 1.0);
  return m;
}

void bench_kernels(int n, int reps) {
  mcap::Rng rng(7);
  const mcap::num::Matrix w = random_matrix(n, n, rng);
  mcap::num::Vec x(n), y_s(n), y_p(n), acc_s(n, 0.0), acc_p(n, 0.0);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) mcap::num::matvec_serial(w, x, y_s.data());
  const double tv_s = ms_since(t0);
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) mcap::num::matvec_omp(w, x, y_p.data());
  const double tv_p = ms_since(t0);
  const bool mv_same = y_s == y_p;

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) mcap::num::matvec_t_acc_serial(w, x, acc_s.data());
  const double tt_s = ms_since(t0);
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) mcap::num::matvec_t_acc_omp(w, x, acc_p.data());
  const double tt_p = ms_since(t0);
  const bool tt_same = acc_s == acc_p;

  mcap::num::Matrix dw_s(n, n), dw_p(n, n);
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) mcap::num::outer_acc_serial(dw_s, x, x);
  const double to_s = ms_since(t0);
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) mcap::num::outer_acc_omp(dw_p, x, x);
  const double to_p = ms_since(t0);
  const bool to_same = dw_s.v == dw_p.v;

  std::printf("kernels at n=%d, %d reps (serial ms / omp ms / speedup / identical)\n", n, reps);
  std::printf("  matvec       %9.2f  %9.2f  %5.2fx  %s\n", tv_s, tv_p, tv_s / tv_p,
              mv_same ? "yes" : "NO");
  std::printf("  matvec_t_acc %9.2f  %9.2f  %5.2fx  %s\n", tt_s, tt_p, tt_s / tt_p,
              tt_same ? "yes" : "NO");
  std::printf("  outer_acc    %9.2f  %9.2f  %5.2fx  %s\n", to_s, to_p, to_s / to_p,
              to_same ? "yes" : "NO");
}

// A teacher-forced batch, forward + backward, with the kernel dispatchers
// switched between serial and parallel establishes the end-to-end effect.
void bench_batch(int hidden, int items, int reps) {
  const int V = 200, D = 64, K = 16, L = 10, T = 18;
  mcap::Rng rng(11);

  mcap::model::ModelConfig mc;
  mc.fusion = mcap::model::Fusion::kAttention;
  mc.extractor = mcap::model::Extractor::kFrozenFile;
  mc.h_enc = mc.h_dec = hidden;
  mc.d = D;
  mc.k = K;
  mc.vocab = V;
  mc.max_len = T;
  mc.dropout = 0.25;
  mc.validate();

  mcap::text::EmbeddingTable emb;
  emb.table = random_matrix(V, D, rng);
  mcap::model::ModelParams P = mcap::model::init_params(mc, emb, rng.next_u64());

  std::vector<mcap::train::TrainItem> pool(items);
  for (int i = 0; i < items; ++i) {
    pool[i].id = "bench_" + std::to_string(i);
    pool[i].features = random_matrix(L, K, rng);
    pool[i].ids.push_back(mcap::text::kSos);
    for (int t = 0; t < T; ++t)
      pool[i].ids.push_back(rng.uniform_int(mcap::text::kNumSpecials, V - 1));
    pool[i].ids.push_back(mcap::text::kEos);
  }
  std::vector<const mcap::train::TrainItem*> batch;
  for (const auto& item : pool) batch.push_back(&item);

  mcap::model::ModelParams grads = P;  // shape donor for the accumulators

  double loss_serial = 0.0, loss_parallel = 0.0;
  mcap::num::set_parallel(false);
  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) {
    grads.zero_grads();
    loss_serial = mcap::train::batch_pass(P, batch, 42, &grads).loss;
  }
  const double ts = ms_since(t0);
  mcap::num::set_parallel(true);
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) {
    grads.zero_grads();
    loss_parallel = mcap::train::batch_pass(P, batch, 42, &grads).loss;
  }
  const double tp = ms_since(t0);

  std::printf("batch fwd+bwd, H=%d, %d items, %d reps: serial %.2f ms, omp %.2f ms, %.2fx, "
              "loss identical %s\n",
              hidden, items, reps, ts, tp, ts / tp, loss_serial == loss_parallel ? "yes" : "NO");
}

void bench_retrieval(int hidden, int pool_n, int reps) {
  const int V = 200, D = 64, K = 16, L = 10, T = 12;
  mcap::Rng rng(13);

  mcap::model::ModelConfig mc;
  mc.fusion = mcap::model::Fusion::kLate;
  mc.extractor = mcap::model::Extractor::kFrozenFile;
  mc.h_enc = mc.h_dec = hidden;
  mc.d = D;
  mc.k = K;
  mc.vocab = V;
  mc.max_len = T;
  mc.validate();

  mcap::text::EmbeddingTable emb;
  emb.table = random_matrix(V, D, rng);
  const mcap::model::ModelParams P = mcap::model::init_params(mc, emb, rng.next_u64());

  std::vector<mcap::num::Matrix> feats;
  std::vector<int> ids{mcap::text::kSos};
  for (int t = 0; t < T; ++t) ids.push_back(rng.uniform_int(mcap::text::kNumSpecials, V - 1));
  ids.push_back(mcap::text::kEos);
  for (int i = 0; i < pool_n; ++i) feats.push_back(random_matrix(L, K, rng));

  double sum = 0.0;
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) {
#pragma omp parallel for schedule(static) reduction(+ : sum)
    for (int i = 0; i < pool_n; ++i) {
      mcap::model::AudioInput in;
      in.features = &feats[i];
      sum += mcap::model::sequence_logprob(P, in, ids);
    }
  }
  const double t = ms_since(t0);
  std::printf("retrieval fan-out, %d candidates x %d reps: %.2f ms (%.3f ms/score, checksum %.3f)\n",
              pool_n, reps, t, t / (pool_n * reps), sum);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel and hot-path benchmarks"};
  int n = 768, reps = 50, hidden = 128, items = 16, pool_n = 64;
  app.add_option("--n", n, "square kernel size");
  app.add_option("--reps", reps, "repetitions per timing");
  app.add_option("--hidden", hidden, "model width for the batch benchmark");
  app.add_option("--items", items, "batch size for the batch benchmark");
  app.add_option("--pool", pool_n, "candidate count for the retrieval benchmark");
  CLI11_PARSE(app, argc, argv);

  bench_kernels(n, reps);
  bench_batch(hidden, items, std::max(1, reps / 10));
  bench_retrieval(hidden, pool_n, std::max(1, reps / 10));
  return 0;
}
