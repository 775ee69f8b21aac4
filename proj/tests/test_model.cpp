#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mcap/audio.hpp"
#include "mcap/common.hpp"
#include "mcap/model.hpp"
#include "mcap/rng.hpp"
#include "mcap/text.hpp"

using namespace mcap;
using num::Matrix;
using num::Vec;
namespace fs = std::filesystem;

namespace {

constexpr int kV = 10, kD = 5, kH = 6, kK = 4, kL = 3, kMaxLen = 8;

text::EmbeddingTable small_embeddings(uint64_t seed, int v = kV, int d = kD) {
  text::EmbeddingTable emb;
  emb.table = Matrix(v, d);
  Rng rng(seed);
  for (double& x : emb.table.v) x = rng.uniform(-0.5, 0.5);
  return emb;
}

model::ModelConfig small_config(model::Fusion fusion,
                                model::Extractor extractor = model::Extractor::kFrozenFile) {
  model::ModelConfig cfg;
  cfg.fusion = fusion;
  cfg.extractor = extractor;
  cfg.h_enc = cfg.h_dec = kH;
  cfg.d = kD;
  cfg.k = kK;
  cfg.vocab = kV;
  cfg.max_len = kMaxLen;
  cfg.dropout = 0.0;
  if (extractor == model::Extractor::kTrainable) cfg.frontend_in = 3;
  return cfg;
}

Matrix random_features(int rows, uint64_t seed) {
  Matrix m(rows, kK);
  Rng rng(seed);
  for (double& x : m.v) x = rng.uniform(-1.0, 1.0);
  return m;
}

std::vector<int> framed_ids(std::initializer_list<int> content) {
  std::vector<int> ids{text::kSos};
  ids.insert(ids.end(), content);
  ids.push_back(text::kEos);
  return ids;
}

}  // namespace

TEST_CASE("parameter inventory follows the fusion mode") {
  const auto emb = small_embeddings(1);

  auto early = model::init_params(small_config(model::Fusion::kEarly), emb, 2);
  CHECK(early.proj_early_w.value.rows == kD);
  CHECK(early.proj_early_w.value.cols == kK);
  CHECK(early.proj_late_w.value.v.empty());
  CHECK(early.att_w.value.v.empty());
  CHECK(early.enc_w_x.value.cols == 2 * kD);  // [audio ; word]
  CHECK(early.frontend_w.value.v.empty());

  auto late = model::init_params(small_config(model::Fusion::kLate), emb, 2);
  CHECK(late.proj_late_w.value.rows == kH);
  CHECK(late.proj_late_w.value.cols == kK);
  CHECK(late.proj_early_w.value.v.empty());
  CHECK(late.enc_w_x.value.cols == kD);
  CHECK(late.dec_w_x.value.cols == 2 * kH);

  auto att = model::init_params(small_config(model::Fusion::kAttention), emb, 2);
  CHECK(att.att_w_a.value.rows == kH);
  CHECK(att.att_w_a.value.cols == kK);
  CHECK(att.att_w_h.value.rows == kH);
  CHECK(att.att_w_h.value.cols == kH);
  CHECK(att.att_w.value.rows == kH);
  CHECK(att.att_w.value.cols == 1);
  CHECK(att.dec_w_x.value.cols == kK + kH);
  CHECK(att.proj_early_w.value.v.empty());
  CHECK(att.proj_late_w.value.v.empty());

  auto trainable = model::init_params(
      small_config(model::Fusion::kAttention, model::Extractor::kTrainable), emb, 2);
  CHECK(trainable.frontend_w.value.rows == kK);
  CHECK(trainable.frontend_w.value.cols == 9);  // 3 * frontend_in
  CHECK(trainable.frontend_b.value.rows == kK);
}

TEST_CASE("initialization: frozen embeddings, unit forget bias, bounded weights") {
  const auto emb = small_embeddings(3);
  const auto P = model::init_params(small_config(model::Fusion::kLate), emb, 4);

  CHECK(P.embed.frozen);
  CHECK(P.embed.value.v == emb.table.v);

  for (int j = 0; j < 4 * kH; ++j) {
    const double want = (j >= kH && j < 2 * kH) ? 1.0 : 0.0;
    CHECK(P.enc_b.value.v[j] == want);
    CHECK(P.dec_b.value.v[j] == want);
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(kD));
  for (double x : P.enc_w_x.value.v) {
    CHECK(x <= bound);
    CHECK(x >= -bound);
  }
  CHECK(P.out_b.value.v == Vec(kV, 0.0));
}

TEST_CASE("same seed same params, different seed different params") {
  const auto emb = small_embeddings(5);
  const auto cfg = small_config(model::Fusion::kAttention);
  const auto a = model::init_params(cfg, emb, 7);
  const auto b = model::init_params(cfg, emb, 7);
  const auto c = model::init_params(cfg, emb, 8);
  CHECK(a.enc_w_x.value.v == b.enc_w_x.value.v);
  CHECK(a.att_w.value.v == b.att_w.value.v);
  CHECK(a.enc_w_x.value.v != c.enc_w_x.value.v);
}

TEST_CASE("teacher-forced loss is near ln V at initialization") {
  for (const auto fusion :
       {model::Fusion::kEarly, model::Fusion::kLate, model::Fusion::kAttention}) {
    const auto P = model::init_params(small_config(fusion), small_embeddings(9), 10);
    const Matrix feats = random_features(kL, 11);
    model::AudioInput in;
    in.features = &feats;
    model::SeqCache cache;
    const auto ids = framed_ids({4, 5, 6, 7});
    const double nll = model::seq_forward(P, in, ids, nullptr, cache);
    const double per_step = nll / (ids.size() - 1);
    CHECK(per_step == doctest::Approx(std::log(kV)).epsilon(0.02));
  }
}

TEST_CASE("sequence framing is enforced") {
  const auto P = model::init_params(small_config(model::Fusion::kLate), small_embeddings(1), 2);
  const Matrix feats = random_features(kL, 3);
  model::AudioInput in;
  in.features = &feats;
  model::SeqCache cache;
  CHECK_THROWS_AS(model::seq_forward(P, in, {text::kSos}, nullptr, cache), Error);
  CHECK_THROWS_AS(model::seq_forward(P, in, {4, 5, text::kEos}, nullptr, cache), Error);
  CHECK_THROWS_AS(model::seq_forward(P, in, {text::kSos, 4, 5}, nullptr, cache), Error);
  CHECK_THROWS_AS(model::seq_forward(P, in, {text::kSos, 99, text::kEos}, nullptr, cache),
                  ShapeError);
}

TEST_CASE("audio reaches the prediction in every fusion mode") {
  const Matrix fa = random_features(kL, 21);
  const Matrix fb = random_features(kL, 22);
  const auto ids = framed_ids({4, 5, 6});
  for (const auto fusion :
       {model::Fusion::kEarly, model::Fusion::kLate, model::Fusion::kAttention}) {
    const auto P = model::init_params(small_config(fusion), small_embeddings(23), 24);
    model::AudioInput ia, ib;
    ia.features = &fa;
    ib.features = &fb;
    model::SeqCache ca, cb;
    const double la = model::seq_forward(P, ia, ids, nullptr, ca);
    const double lb = model::seq_forward(P, ib, ids, nullptr, cb);
    CHECK(la != lb);
  }
}

TEST_CASE("the encoder is text-only outside early fusion") {
  const Matrix fa = random_features(kL, 31);
  const Matrix fb = random_features(kL, 32);
  const auto ids = framed_ids({4, 5, 6, 7});
  for (const auto fusion : {model::Fusion::kLate, model::Fusion::kAttention}) {
    const auto P = model::init_params(small_config(fusion), small_embeddings(33), 34);
    model::AudioInput ia, ib;
    ia.features = &fa;
    ib.features = &fb;
    model::SeqCache ca, cb;
    model::seq_forward(P, ia, ids, nullptr, ca);
    model::seq_forward(P, ib, ids, nullptr, cb);
    REQUIRE(ca.steps.size() == cb.steps.size());
    for (size_t t = 0; t < ca.steps.size(); ++t)
      CHECK(ca.steps[t].h_enc_out == cb.steps[t].h_enc_out);
  }
  // Early fusion: the encoder state must depend on the audio.
  const auto P = model::init_params(small_config(model::Fusion::kEarly), small_embeddings(33), 34);
  model::AudioInput ia, ib;
  ia.features = &fa;
  ib.features = &fb;
  model::SeqCache ca, cb;
  model::seq_forward(P, ia, ids, nullptr, ca);
  model::seq_forward(P, ib, ids, nullptr, cb);
  CHECK(ca.steps[0].h_enc_out != cb.steps[0].h_enc_out);
}

TEST_CASE("encoder_step rejects injected audio outside early fusion") {
  const auto P = model::init_params(small_config(model::Fusion::kLate), small_embeddings(35), 36);
  Vec w(kD, 0.1), h(kH, 0.0), c(kH, 0.0), audio(kD, 0.5);
  CHECK_THROWS_WITH_AS(model::encoder_step(P, w, audio, h, c),
                       "audio reaches the encoder only in early fusion", Error);
}

TEST_CASE("attention weights: normalized, uniform on identical chunks, unit on L=1") {
  const auto P = model::init_params(small_config(model::Fusion::kAttention), small_embeddings(41), 42);
  Rng rng(43);

  for (int trial = 0; trial < 100; ++trial) {
    Matrix A(1 + trial % 5, kK);
    for (double& x : A.v) x = rng.uniform(-2.0, 2.0);
    Vec h(kH);
    for (double& x : h) x = rng.uniform(-1.0, 1.0);
    Vec beta;
    const Vec pooled = model::attend(P, A, h, beta);
    REQUIRE(static_cast<int>(beta.size()) == A.rows);
    const double sum = std::accumulate(beta.begin(), beta.end(), 0.0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    for (double b : beta) CHECK(b >= 0.0);
    CHECK(static_cast<int>(pooled.size()) == kK);
  }

  Matrix same(4, kK);
  for (int l = 0; l < 4; ++l)
    for (int j = 0; j < kK; ++j) same.at(l, j) = 0.3 * j - 0.1;
  Vec h(kH, 0.2), beta;
  model::attend(P, same, h, beta);
  for (double b : beta) CHECK(b == doctest::Approx(0.25).epsilon(1e-9));

  Matrix one(1, kK);
  for (double& x : one.v) x = 0.7;
  model::attend(P, one, h, beta);
  CHECK(beta.size() == 1);
  CHECK(beta[0] == 1.0);
}

TEST_CASE("permuting chunks permutes attention weights and keeps the summary") {
  const auto P = model::init_params(small_config(model::Fusion::kAttention), small_embeddings(51), 52);
  Matrix A = random_features(4, 53);
  Vec h(kH);
  Rng rng(54);
  for (double& x : h) x = rng.uniform(-1.0, 1.0);

  Vec beta;
  const Vec pooled = model::attend(P, A, h, beta);

  const std::vector<int> perm{2, 0, 3, 1};
  Matrix B(4, kK);
  for (int l = 0; l < 4; ++l)
    for (int j = 0; j < kK; ++j) B.at(l, j) = A.at(perm[l], j);
  Vec beta_p;
  const Vec pooled_p = model::attend(P, B, h, beta_p);

  for (int l = 0; l < 4; ++l) CHECK(beta_p[l] == doctest::Approx(beta[perm[l]]).epsilon(1e-12));
  for (int j = 0; j < kK; ++j) CHECK(pooled_p[j] == doctest::Approx(pooled[j]).epsilon(1e-12));
}

TEST_CASE("prepare_clip validates input against the configured extractor") {
  const auto P = model::init_params(small_config(model::Fusion::kLate), small_embeddings(61), 62);
  model::AudioInput in;
  CHECK_THROWS_AS(model::prepare_clip(P, in), Error);  // nothing set

  Matrix wrong_k(kL, kK + 1);
  in.features = &wrong_k;
  CHECK_THROWS_AS(model::prepare_clip(P, in), ShapeError);

  const auto PT = model::init_params(
      small_config(model::Fusion::kLate, model::Extractor::kTrainable), small_embeddings(61), 62);
  model::AudioInput chunked;
  Matrix feats = random_features(kL, 63);
  chunked.features = &feats;  // features offered to a trainable frontend
  CHECK_THROWS_AS(model::prepare_clip(PT, chunked), Error);
}

TEST_CASE("sequence_logprob equals the negated teacher-forced loss") {
  for (const auto fusion :
       {model::Fusion::kEarly, model::Fusion::kLate, model::Fusion::kAttention}) {
    const auto P = model::init_params(small_config(fusion), small_embeddings(71), 72);
    const Matrix feats = random_features(kL, 73);
    model::AudioInput in;
    in.features = &feats;
    const auto ids = framed_ids({4, 5, 6, 7, 8});
    model::SeqCache cache;
    const double nll = model::seq_forward(P, in, ids, nullptr, cache);
    CHECK(model::sequence_logprob(P, in, ids) == -nll);
  }
}

TEST_CASE("sequence_logprob equals a manual gen_step walk") {
  const auto P = model::init_params(small_config(model::Fusion::kAttention), small_embeddings(81), 82);
  const Matrix feats = random_features(kL, 83);
  model::AudioInput in;
  in.features = &feats;
  const auto ids = framed_ids({5, 7, 4});

  const model::ClipContext ctx = model::prepare_clip(P, in);
  model::GenState st;
  model::init_state(P, st);
  double total = 0.0;
  for (size_t t = 1; t < ids.size(); ++t) {
    const Vec lp = model::gen_step(P, ctx, st, ids[t - 1]);
    total += lp[ids[t]];
  }
  CHECK(model::sequence_logprob(P, in, ids) == total);
}

TEST_CASE("greedy decoding honors the hypothesis invariant") {
  for (const auto fusion :
       {model::Fusion::kEarly, model::Fusion::kLate, model::Fusion::kAttention}) {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const auto P = model::init_params(small_config(fusion), small_embeddings(seed), seed + 100);
      const Matrix feats = random_features(kL, seed + 200);
      model::AudioInput in;
      in.features = &feats;
      const auto hyp = model::greedy_decode(P, in, kMaxLen);
      CHECK(hyp.finished);
      REQUIRE(!hyp.ids.empty());
      CHECK(hyp.ids.front() == text::kSos);
      CHECK(hyp.ids.size() <= static_cast<size_t>(kMaxLen) + 2);
      const bool ended = hyp.ids.back() == text::kEos;
      const bool capped = hyp.ids.size() == static_cast<size_t>(kMaxLen) + 2;
      CHECK((ended || capped));
      for (size_t j = 1; j < hyp.ids.size(); ++j) {
        CHECK(hyp.ids[j] != text::kPad);
        CHECK(hyp.ids[j] != text::kSos);
      }
      CHECK(hyp.logprob < 0.0);
    }
  }
}

TEST_CASE("checkpoints round-trip bit for bit") {
  const fs::path dir = fs::temp_directory_path() / "ckpt_rt";
  fs::remove_all(dir);

  const auto cfg = small_config(model::Fusion::kAttention, model::Extractor::kTrainable);
  const auto P = model::init_params(cfg, small_embeddings(91), 92);
  const auto vocab = text::Vocabulary::from_tokens(
      {"<pad>", "<sos>", "<eos>", "<unk>", "a", "b", "c", "d", "e", "f"});
  REQUIRE(vocab.size() == kV);

  model::save_checkpoint(dir.string(), P, vocab);
  const model::Checkpoint ck = model::load_checkpoint(dir.string());

  CHECK(ck.params.cfg.fusion == cfg.fusion);
  CHECK(ck.params.cfg.extractor == cfg.extractor);
  CHECK(ck.params.cfg.h_enc == cfg.h_enc);
  CHECK(ck.params.cfg.max_len == cfg.max_len);
  CHECK(ck.params.cfg.frontend_in == cfg.frontend_in);
  CHECK(ck.vocab.tokens() == vocab.tokens());

  const auto orig = P.all();
  const auto back = ck.params.all();
  REQUIRE(orig.size() == back.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(back[i]->name == orig[i]->name);
    CHECK(back[i]->value.v == orig[i]->value.v);  // float64 exact
    CHECK(back[i]->frozen == orig[i]->frozen);
  }

  // Behavioral identity: the reloaded model scores sequences identically.
  audio::ChunkSet cs;
  cs.chunk_seconds = cfg.chunk_seconds;
  cs.frames_per_chunk = 4;
  cs.feature_dim = cfg.frontend_in;
  Rng rng(93);
  for (int l = 0; l < kL; ++l) {
    Matrix m(4, cfg.frontend_in);
    for (double& x : m.v) x = rng.uniform(-1.0, 1.0);
    cs.chunks.push_back(std::move(m));
  }
  model::AudioInput in;
  in.chunks = &cs;
  const auto ids = framed_ids({4, 6, 8});
  CHECK(model::sequence_logprob(P, in, ids) == model::sequence_logprob(ck.params, in, ids));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects missing and truncated data") {
  CHECK_THROWS_AS(model::load_checkpoint("/nonexistent/ckpt"), IoError);

  const fs::path dir = fs::temp_directory_path() / "ckpt_bad";
  fs::remove_all(dir);
  const auto P = model::init_params(small_config(model::Fusion::kLate), small_embeddings(96), 97);
  const auto vocab = text::Vocabulary::from_tokens(
      {"<pad>", "<sos>", "<eos>", "<unk>", "a", "b", "c", "d", "e", "f"});
  model::save_checkpoint(dir.string(), P, vocab);

  const auto size = fs::file_size(dir / "params.bin");
  fs::resize_file(dir / "params.bin", size - 8);
  CHECK_THROWS_AS(model::load_checkpoint(dir.string()), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("dropout training is stochastic under a seeded rng and off in eval") {
  auto cfg = small_config(model::Fusion::kLate);
  cfg.dropout = 0.5;
  const auto P = model::init_params(cfg, small_embeddings(98), 99);
  const Matrix feats = random_features(kL, 100);
  model::AudioInput in;
  in.features = &feats;
  const auto ids = framed_ids({4, 5, 6, 7});

  model::SeqCache c1, c2, c3;
  Rng ra(1), rb(1), rc(2);
  const double la = model::seq_forward(P, in, ids, &ra, c1);
  const double lb = model::seq_forward(P, in, ids, &rb, c2);
  const double lc = model::seq_forward(P, in, ids, &rc, c3);
  CHECK(la == lb);   // same dropout stream
  CHECK(la != lc);   // different stream, different masks
  CHECK(!c1.steps[0].w_mask.empty());

  model::SeqCache ce1, ce2;
  const double e1 = model::seq_forward(P, in, ids, nullptr, ce1);
  const double e2 = model::seq_forward(P, in, ids, nullptr, ce2);
  CHECK(e1 == e2);
  CHECK(ce1.steps[0].w_mask.empty());
}
