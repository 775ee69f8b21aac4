#include "mcap/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "mcap/common.hpp"
#include "mcap/kernels.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mcap::model {

using num::LstmCache;
using num::Matrix;
using num::ParamTensor;
using num::Vec;

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::kEarly: return "early";
    case Fusion::kLate: return "late";
    default: return "attention";
  }
}

Fusion fusion_from_string(const std::string& s) {
  if (s == "early") return Fusion::kEarly;
  if (s == "late") return Fusion::kLate;
  if (s == "attention") return Fusion::kAttention;
  throw ParseError("unknown fusion mode: " + s);
}

std::string to_string(Extractor e) {
  return e == Extractor::kFrozenFile ? "frozen-file" : "trainable";
}

Extractor extractor_from_string(const std::string& s) {
  if (s == "frozen-file") return Extractor::kFrozenFile;
  if (s == "trainable") return Extractor::kTrainable;
  throw ParseError("unknown extractor variant: " + s);
}

void ModelConfig::validate() const {
  if (h_enc < 1 || h_dec < 1) throw Error("hidden sizes must be positive");
  if (d < 1 || k < 1) throw Error("embedding and feature widths must be positive");
  if (vocab < text::kNumSpecials + 1)
    throw Error("vocabulary must hold the specials plus at least one token");
  if (max_len < 1) throw Error("max_len must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout rate must lie in [0,1)");
  if (extractor == Extractor::kTrainable) {
    if (frontend_in < 1) throw Error("trainable frontend needs a positive input width");
    if (chunk_seconds <= 0.0) throw Error("chunk length must be positive");
  }
}

namespace {

template <class Params, class Tensor>
std::vector<Tensor*> list_params(Params& P) {
  std::vector<Tensor*> out;
  const auto push = [&](Tensor& t) {
    if (!t.value.v.empty()) out.push_back(&t);
  };
  push(P.embed);
  push(P.frontend_w);
  push(P.frontend_b);
  push(P.enc_w_x);
  push(P.enc_w_h);
  push(P.enc_b);
  push(P.proj_early_w);
  push(P.proj_early_b);
  push(P.proj_late_w);
  push(P.att_w_a);
  push(P.att_w_h);
  push(P.att_w);
  push(P.dec_w_x);
  push(P.dec_w_h);
  push(P.dec_b);
  push(P.out_w);
  push(P.out_b);
  return out;
}

}  // namespace

std::vector<ParamTensor*> ModelParams::all() { return list_params<ModelParams, ParamTensor>(*this); }

std::vector<const ParamTensor*> ModelParams::all() const {
  return list_params<const ModelParams, const ParamTensor>(*this);
}

std::vector<ParamTensor*> ModelParams::trainable() {
  std::vector<ParamTensor*> out;
  for (ParamTensor* p : all())
    if (!p->frozen) out.push_back(p);
  return out;
}

void ModelParams::zero_grads() {
  for (ParamTensor* p : all()) p->zero_grad();
}

namespace {

// Allocates every tensor the mode needs, zero-valued.
ModelParams allocate_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams P;
  P.cfg = cfg;
  P.embed = ParamTensor("embed.table", cfg.vocab, cfg.d, /*frozen=*/true);
  if (cfg.extractor == Extractor::kTrainable) {
    P.frontend_w = ParamTensor("frontend.w", cfg.k, 3 * cfg.frontend_in);
    P.frontend_b = ParamTensor("frontend.b", cfg.k, 1);
  }
  P.enc_w_x = ParamTensor("enc.w_x", 4 * cfg.h_enc, cfg.enc_input_dim());
  P.enc_w_h = ParamTensor("enc.w_h", 4 * cfg.h_enc, cfg.h_enc);
  P.enc_b = ParamTensor("enc.b", 4 * cfg.h_enc, 1);
  if (cfg.fusion == Fusion::kEarly) {
    P.proj_early_w = ParamTensor("proj_early.w", cfg.d, cfg.k);
    P.proj_early_b = ParamTensor("proj_early.b", cfg.d, 1);
  } else if (cfg.fusion == Fusion::kLate) {
    P.proj_late_w = ParamTensor("proj_late.w", cfg.h_enc, cfg.k);
  } else {
    P.att_w_a = ParamTensor("att.w_a", cfg.h_dec, cfg.k);
    P.att_w_h = ParamTensor("att.w_h", cfg.h_dec, cfg.h_enc);
    P.att_w = ParamTensor("att.w", cfg.h_dec, 1);
  }
  P.dec_w_x = ParamTensor("dec.w_x", 4 * cfg.h_dec, cfg.dec_input_dim());
  P.dec_w_h = ParamTensor("dec.w_h", 4 * cfg.h_dec, cfg.h_dec);
  P.dec_b = ParamTensor("dec.b", 4 * cfg.h_dec, 1);
  P.out_w = ParamTensor("out.w", cfg.vocab, cfg.h_dec);
  P.out_b = ParamTensor("out.b", cfg.vocab, 1);
  return P;
}

void fill_uniform(ParamTensor& t, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : t.value.v) x = rng.uniform(-bound, bound);
}

void fill_lstm_bias(ParamTensor& b, int hidden) {
  b.value.zero();
  for (int i = hidden; i < 2 * hidden; ++i) b.value.v[i] = 1.0;  // forget gate
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, const text::EmbeddingTable& emb, uint64_t seed) {
  ModelParams P = allocate_params(cfg);
  num::require_shape(emb.table, cfg.vocab, cfg.d, "embedding table");
  P.embed.value = emb.table;
  P.embed.frozen = emb.frozen;

  Rng rng(seed);
  if (cfg.extractor == Extractor::kTrainable) {
    fill_uniform(P.frontend_w, 3 * cfg.frontend_in, rng);
    P.frontend_b.value.zero();
  }
  fill_uniform(P.enc_w_x, cfg.enc_input_dim(), rng);
  fill_uniform(P.enc_w_h, cfg.h_enc, rng);
  fill_lstm_bias(P.enc_b, cfg.h_enc);
  if (cfg.fusion == Fusion::kEarly) {
    fill_uniform(P.proj_early_w, cfg.k, rng);
    P.proj_early_b.value.zero();
  } else if (cfg.fusion == Fusion::kLate) {
    fill_uniform(P.proj_late_w, cfg.k, rng);
  } else {
    fill_uniform(P.att_w_a, cfg.k, rng);
    fill_uniform(P.att_w_h, cfg.h_enc, rng);
    fill_uniform(P.att_w, cfg.h_dec, rng);
  }
  fill_uniform(P.dec_w_x, cfg.dec_input_dim(), rng);
  fill_uniform(P.dec_w_h, cfg.h_dec, rng);
  fill_lstm_bias(P.dec_b, cfg.h_dec);
  fill_uniform(P.out_w, cfg.h_dec, rng);
  P.out_b.value.zero();
  return P;
}

ClipContext prepare_clip(const ModelParams& P, const AudioInput& in, bool cache_frontend) {
  const ModelConfig& cfg = P.cfg;
  ClipContext ctx;
  if (cfg.extractor == Extractor::kFrozenFile) {
    if (!in.features) throw Error("frozen extractor expects precomputed features");
    if (in.features->cols != cfg.k)
      throw ShapeError("features are " + std::to_string(in.features->cols) +
                       " wide, model expects k=" + std::to_string(cfg.k));
    if (in.features->rows < 1) throw Error("clip has no feature rows");
    ctx.A = *in.features;
  } else {
    if (!in.chunks) throw Error("trainable frontend expects raw chunks");
    audio::FeatureSequence seq = audio::frontend_forward(
        *in.chunks, P.frontend_w.value, P.frontend_b.value, cache_frontend ? &ctx.frontend : nullptr);
    ctx.A = std::move(seq.features);
    ctx.chunks = in.chunks;
  }
  if (!ctx.A.all_finite()) throw NumericError("non-finite chunk features");

  if (cfg.fusion != Fusion::kAttention) {
    audio::TrackEmbedding te = audio::mean_pool(audio::FeatureSequence{ctx.A});
    ctx.a_tilde = std::move(te.v);
    if (cfg.fusion == Fusion::kEarly) {
      ctx.audio_proj.assign(cfg.d, 0.0);
      num::matvec(P.proj_early_w.value, ctx.a_tilde, ctx.audio_proj.data());
      for (int i = 0; i < cfg.d; ++i) ctx.audio_proj[i] += P.proj_early_b.value.v[i];
    } else {
      ctx.late_q.assign(cfg.h_enc, 0.0);
      num::matvec(P.proj_late_w.value, ctx.a_tilde, ctx.late_q.data());
    }
  }
  return ctx;
}

void init_state(const ModelParams& P, GenState& st) {
  st.h_enc.assign(P.cfg.h_enc, 0.0);
  st.c_enc.assign(P.cfg.h_enc, 0.0);
  st.h_dec.assign(P.cfg.h_dec, 0.0);
  st.c_dec.assign(P.cfg.h_dec, 0.0);
}

void encoder_step(const ModelParams& P, const Vec& w_embedded, const Vec& audio_proj, Vec& h,
                  Vec& c, LstmCache* cache) {
  const ModelConfig& cfg = P.cfg;
  num::require_len(w_embedded.size(), cfg.d, "embedded word");
  Vec x;
  if (cfg.fusion == Fusion::kEarly) {
    num::require_len(audio_proj.size(), cfg.d, "projected audio");
    x.reserve(2 * cfg.d);
    x.insert(x.end(), audio_proj.begin(), audio_proj.end());
    x.insert(x.end(), w_embedded.begin(), w_embedded.end());
  } else {
    if (!audio_proj.empty())
      throw Error("audio reaches the encoder only in early fusion");
    x = w_embedded;
  }
  Vec h_new, c_new;
  num::lstm_cell(P.enc_w_x.value, P.enc_w_h.value, P.enc_b.value, x, h, c, h_new, c_new, cache);
  h.swap(h_new);
  c.swap(c_new);
}

Vec attend(const ModelParams& P, const Matrix& A, const Vec& h_enc, Vec& beta_out,
           Matrix* tanh_cache) {
  const ModelConfig& cfg = P.cfg;
  if (P.att_w.value.v.empty()) throw Error("attention parameters are not allocated in this mode");
  if (A.rows < 1) throw Error("attention over an empty feature sequence");
  if (A.cols != cfg.k) throw ShapeError("feature width does not match k");
  num::require_len(h_enc.size(), cfg.h_enc, "attention query");

  const int L = A.rows;
  const int hd = cfg.h_dec;
  Vec wh(hd, 0.0);
  num::matvec(P.att_w_h.value, h_enc, wh.data());

  Matrix tanh_rows(L, hd);
  Vec e(L, 0.0);
  Vec u(hd);
  for (int i = 0; i < L; ++i) {
    std::fill(u.begin(), u.end(), 0.0);
    num::matvec(P.att_w_a.value, std::span<const double>(A.row(i), A.cols), u.data());
    double score = 0.0;
    double* tr = tanh_rows.row(i);
    for (int j = 0; j < hd; ++j) {
      tr[j] = std::tanh(u[j] + wh[j]);
      score += P.att_w.value.v[j] * tr[j];
    }
    e[i] = score;
  }
  beta_out = num::softmax(e);

  Vec pooled(cfg.k, 0.0);
  for (int i = 0; i < L; ++i) {
    const double* ar = A.row(i);
    for (int j = 0; j < cfg.k; ++j) pooled[j] += beta_out[i] * ar[j];
  }
  if (tanh_cache) *tanh_cache = std::move(tanh_rows);
  return pooled;
}

Vec decoder_step(const ModelParams& P, const Vec& x_dec, Vec& h, Vec& c, LstmCache* cache) {
  const ModelConfig& cfg = P.cfg;
  num::require_len(x_dec.size(), cfg.dec_input_dim(), "decoder input");
  Vec h_new, c_new;
  num::lstm_cell(P.dec_w_x.value, P.dec_w_h.value, P.dec_b.value, x_dec, h, c, h_new, c_new,
                 cache);
  h.swap(h_new);
  c.swap(c_new);
  Vec logits(cfg.vocab, 0.0);
  num::matvec(P.out_w.value, h, logits.data());
  for (int i = 0; i < cfg.vocab; ++i) logits[i] += P.out_b.value.v[i];
  return logits;
}

namespace {

// One full model step shared by training, scoring, and decoding: embed the
// previous token, advance the encoder, build the mode's decoder input,
// advance the decoder. Returns logits over V.
Vec core_step(const ModelParams& P, const ClipContext& ctx, GenState& st, int prev_id, Rng* rng,
              StepCache* cache, Vec* beta_out) {
  const ModelConfig& cfg = P.cfg;
  if (prev_id < 0 || prev_id >= cfg.vocab)
    throw ShapeError("token id " + std::to_string(prev_id) + " outside vocabulary");

  const double* er = P.embed.value.row(prev_id);
  Vec w(er, er + cfg.d);
  if (rng && cfg.dropout > 0.0) {
    Vec mask = num::dropout_mask(cfg.d, cfg.dropout, *rng);
    for (int i = 0; i < cfg.d; ++i) w[i] *= mask[i];
    if (cache) cache->w_mask = std::move(mask);
  }

  encoder_step(P, w, ctx.audio_proj, st.h_enc, st.c_enc, cache ? &cache->enc : nullptr);

  Vec x_dec;
  if (cfg.fusion == Fusion::kEarly) {
    x_dec = st.h_enc;
  } else if (cfg.fusion == Fusion::kLate) {
    x_dec.reserve(2 * cfg.h_enc);
    x_dec.insert(x_dec.end(), ctx.late_q.begin(), ctx.late_q.end());
    x_dec.insert(x_dec.end(), st.h_enc.begin(), st.h_enc.end());
  } else {
    Vec beta;
    Vec pooled = attend(P, ctx.A, st.h_enc, beta, cache ? &cache->att_tanh : nullptr);
    if (cache) cache->beta = beta;
    if (beta_out) *beta_out = std::move(beta);
    x_dec.reserve(cfg.k + cfg.h_enc);
    x_dec.insert(x_dec.end(), pooled.begin(), pooled.end());
    x_dec.insert(x_dec.end(), st.h_enc.begin(), st.h_enc.end());
  }
  if (rng && cfg.dropout > 0.0) {
    Vec mask = num::dropout_mask(static_cast<int>(x_dec.size()), cfg.dropout, *rng);
    for (size_t i = 0; i < x_dec.size(); ++i) x_dec[i] *= mask[i];
    if (cache) cache->x_mask = std::move(mask);
  }

  Vec logits = decoder_step(P, x_dec, st.h_dec, st.c_dec, cache ? &cache->dec : nullptr);
  if (cache) {
    cache->prev_id = prev_id;
    cache->h_enc_out = st.h_enc;
    cache->h_dec_out = st.h_dec;
  }
  return logits;
}

void check_framing(const std::vector<int>& ids) {
  if (ids.size() < 2) throw Error("caption must hold <sos> plus at least one token");
  if (ids.front() != text::kSos) throw Error("caption must start with <sos>");
  if (ids.back() != text::kEos) throw Error("caption must end with <eos>");
}

}  // namespace

double seq_forward(const ModelParams& P, const AudioInput& in, const std::vector<int>& ids,
                   Rng* rng, SeqCache& cache) {
  check_framing(ids);
  const bool want_frontend_cache = P.cfg.extractor == Extractor::kTrainable;
  cache.clip = prepare_clip(P, in, want_frontend_cache);
  const int steps = static_cast<int>(ids.size()) - 1;
  cache.steps.assign(steps, StepCache{});

  GenState st;
  init_state(P, st);
  double nll = 0.0;
  for (int s = 0; s < steps; ++s) {
    StepCache& sc = cache.steps[s];
    Vec logits = core_step(P, cache.clip, st, ids[s], rng, &sc, nullptr);
    Vec lp = num::log_softmax(logits);
    sc.target_id = ids[s + 1];
    nll -= lp[sc.target_id];
    sc.probs.resize(lp.size());
    for (size_t i = 0; i < lp.size(); ++i) sc.probs[i] = std::exp(lp[i]);
  }
  if (!std::isfinite(nll)) throw NumericError("non-finite sequence loss");
  return nll;
}

GradSet make_grads(const ModelParams& P) {
  GradSet gs;
  for (const ParamTensor* p : P.all())
    gs.g.push_back(p->frozen ? Matrix() : Matrix(p->value.rows, p->value.cols));
  return gs;
}

void add_grads(const GradSet& src, ModelParams& P) {
  auto params = P.all();
  num::require_len(src.g.size(), params.size(), "gradient buffer");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i]->frozen || src.g[i].v.empty()) continue;
    Matrix& dst = params[i]->grad;
    for (size_t j = 0; j < dst.v.size(); ++j) dst.v[j] += src.g[i].v[j];
  }
}

void accumulate(GradSet& dst, const GradSet& src) {
  num::require_len(src.g.size(), dst.g.size(), "gradient buffer");
  for (size_t i = 0; i < dst.g.size(); ++i) {
    if (dst.g[i].v.empty()) continue;
    for (size_t j = 0; j < dst.g[i].v.size(); ++j) dst.g[i].v[j] += src.g[i].v[j];
  }
}

namespace {

// Positions of each tensor inside the all() ordering, -1 when absent.
struct ParamIdx {
  int embed = -1, frontend_w = -1, frontend_b = -1;
  int enc_w_x = -1, enc_w_h = -1, enc_b = -1;
  int proj_early_w = -1, proj_early_b = -1, proj_late_w = -1;
  int att_w_a = -1, att_w_h = -1, att_w = -1;
  int dec_w_x = -1, dec_w_h = -1, dec_b = -1;
  int out_w = -1, out_b = -1;
};

ParamIdx make_idx(const ModelParams& P) {
  ParamIdx ix;
  auto list = P.all();
  for (int i = 0; i < static_cast<int>(list.size()); ++i) {
    const ParamTensor* p = list[i];
    if (p == &P.embed) ix.embed = i;
    else if (p == &P.frontend_w) ix.frontend_w = i;
    else if (p == &P.frontend_b) ix.frontend_b = i;
    else if (p == &P.enc_w_x) ix.enc_w_x = i;
    else if (p == &P.enc_w_h) ix.enc_w_h = i;
    else if (p == &P.enc_b) ix.enc_b = i;
    else if (p == &P.proj_early_w) ix.proj_early_w = i;
    else if (p == &P.proj_early_b) ix.proj_early_b = i;
    else if (p == &P.proj_late_w) ix.proj_late_w = i;
    else if (p == &P.att_w_a) ix.att_w_a = i;
    else if (p == &P.att_w_h) ix.att_w_h = i;
    else if (p == &P.att_w) ix.att_w = i;
    else if (p == &P.dec_w_x) ix.dec_w_x = i;
    else if (p == &P.dec_w_h) ix.dec_w_h = i;
    else if (p == &P.dec_b) ix.dec_b = i;
    else if (p == &P.out_w) ix.out_w = i;
    else if (p == &P.out_b) ix.out_b = i;
  }
  return ix;
}

}  // namespace

void seq_backward(const ModelParams& P, const SeqCache& cache, double scale, GradSet& gs) {
  const ModelConfig& cfg = P.cfg;
  const ParamIdx ix = make_idx(P);
  num::require_len(gs.g.size(), P.all().size(), "gradient buffer");
  const int steps = static_cast<int>(cache.steps.size());
  if (steps < 1) throw Error("backward over an empty sequence cache");
  const int L = cache.clip.A.rows;

  Vec dh_enc_carry(cfg.h_enc, 0.0), dc_enc_carry(cfg.h_enc, 0.0);
  Vec dh_dec_carry(cfg.h_dec, 0.0), dc_dec_carry(cfg.h_dec, 0.0);
  Vec dp_total, dq_total;
  if (cfg.fusion == Fusion::kEarly) dp_total.assign(cfg.d, 0.0);
  if (cfg.fusion == Fusion::kLate) dq_total.assign(cfg.h_enc, 0.0);
  Matrix dA(L, cfg.k);

  Vec dlogits(cfg.vocab);
  for (int s = steps - 1; s >= 0; --s) {
    const StepCache& sc = cache.steps[s];

    // Output layer.
    for (int i = 0; i < cfg.vocab; ++i) dlogits[i] = scale * sc.probs[i];
    dlogits[sc.target_id] -= scale;
    num::outer_acc(gs.g[ix.out_w], dlogits, sc.h_dec_out);
    for (int i = 0; i < cfg.vocab; ++i) gs.g[ix.out_b].v[i] += dlogits[i];

    Vec dh_dec = dh_dec_carry;
    num::matvec_t_acc(P.out_w.value, dlogits, dh_dec.data());

    // Decoder LSTM.
    Vec dx_dec(cfg.dec_input_dim(), 0.0);
    Vec dh_dec_new(cfg.h_dec, 0.0), dc_dec_new(cfg.h_dec, 0.0);
    num::lstm_cell_backward(P.dec_w_x.value, P.dec_w_h.value, sc.dec, dh_dec, dc_dec_carry,
                            gs.g[ix.dec_w_x], gs.g[ix.dec_w_h], gs.g[ix.dec_b], dx_dec,
                            dh_dec_new, dc_dec_new);
    dh_dec_carry.swap(dh_dec_new);
    dc_dec_carry.swap(dc_dec_new);

    if (!sc.x_mask.empty())
      for (size_t i = 0; i < dx_dec.size(); ++i) dx_dec[i] *= sc.x_mask[i];

    // Split the decoder input gradient by mode.
    Vec dh_enc_step(cfg.h_enc, 0.0);
    if (cfg.fusion == Fusion::kEarly) {
      for (int i = 0; i < cfg.h_enc; ++i) dh_enc_step[i] = dx_dec[i];
    } else if (cfg.fusion == Fusion::kLate) {
      for (int i = 0; i < cfg.h_enc; ++i) dq_total[i] += dx_dec[i];
      for (int i = 0; i < cfg.h_enc; ++i) dh_enc_step[i] = dx_dec[cfg.h_enc + i];
    } else {
      std::span<const double> d_pooled(dx_dec.data(), cfg.k);
      for (int i = 0; i < cfg.h_enc; ++i) dh_enc_step[i] = dx_dec[cfg.k + i];

      // Through pooled = sum_i beta_i a_i.
      Vec dbeta(L, 0.0);
      for (int i = 0; i < L; ++i) {
        const double* ar = cache.clip.A.row(i);
        double s2 = 0.0;
        double* dar = dA.row(i);
        for (int j = 0; j < cfg.k; ++j) {
          s2 += d_pooled[j] * ar[j];
          dar[j] += sc.beta[i] * d_pooled[j];
        }
        dbeta[i] = s2;
      }
      // Softmax backward.
      double dot = 0.0;
      for (int i = 0; i < L; ++i) dot += sc.beta[i] * dbeta[i];
      Vec du(cfg.h_dec);
      for (int i = 0; i < L; ++i) {
        const double de = sc.beta[i] * (dbeta[i] - dot);
        const double* tr = sc.att_tanh.row(i);
        for (int j = 0; j < cfg.h_dec; ++j) {
          gs.g[ix.att_w].v[j] += de * tr[j];
          du[j] = de * P.att_w.value.v[j] * (1.0 - tr[j] * tr[j]);
        }
        num::outer_acc(gs.g[ix.att_w_a], du, std::span<const double>(cache.clip.A.row(i), cfg.k));
        num::outer_acc(gs.g[ix.att_w_h], du, sc.h_enc_out);
        num::matvec_t_acc(P.att_w_a.value, du, dA.row(i));
        num::matvec_t_acc(P.att_w_h.value, du, dh_enc_step.data());
      }
    }

    // Encoder LSTM.
    for (int i = 0; i < cfg.h_enc; ++i) dh_enc_step[i] += dh_enc_carry[i];
    Vec dx_enc(cfg.enc_input_dim(), 0.0);
    Vec dh_enc_new(cfg.h_enc, 0.0), dc_enc_new(cfg.h_enc, 0.0);
    num::lstm_cell_backward(P.enc_w_x.value, P.enc_w_h.value, sc.enc, dh_enc_step, dc_enc_carry,
                            gs.g[ix.enc_w_x], gs.g[ix.enc_w_h], gs.g[ix.enc_b], dx_enc,
                            dh_enc_new, dc_enc_new);
    dh_enc_carry.swap(dh_enc_new);
    dc_enc_carry.swap(dc_enc_new);

    // Split the encoder input gradient.
    std::span<const double> dw;
    if (cfg.fusion == Fusion::kEarly) {
      for (int i = 0; i < cfg.d; ++i) dp_total[i] += dx_enc[i];
      dw = std::span<const double>(dx_enc.data() + cfg.d, cfg.d);
    } else {
      dw = std::span<const double>(dx_enc.data(), cfg.d);
    }
    if (!P.embed.frozen) {
      double* row = gs.g[ix.embed].row(sc.prev_id);
      if (sc.w_mask.empty())
        for (int i = 0; i < cfg.d; ++i) row[i] += dw[i];
      else
        for (int i = 0; i < cfg.d; ++i) row[i] += dw[i] * sc.w_mask[i];
    }
  }

  // Audio projections (their inputs are shared across steps).
  Vec da_tilde;
  if (cfg.fusion == Fusion::kEarly) {
    num::outer_acc(gs.g[ix.proj_early_w], dp_total, cache.clip.a_tilde);
    for (int i = 0; i < cfg.d; ++i) gs.g[ix.proj_early_b].v[i] += dp_total[i];
    da_tilde.assign(cfg.k, 0.0);
    num::matvec_t_acc(P.proj_early_w.value, dp_total, da_tilde.data());
  } else if (cfg.fusion == Fusion::kLate) {
    num::outer_acc(gs.g[ix.proj_late_w], dq_total, cache.clip.a_tilde);
    da_tilde.assign(cfg.k, 0.0);
    num::matvec_t_acc(P.proj_late_w.value, dq_total, da_tilde.data());
  }
  if (!da_tilde.empty()) audio::mean_pool_backward(da_tilde, dA);

  if (cfg.extractor == Extractor::kTrainable) {
    if (!cache.clip.chunks) throw Error("sequence cache lost its chunk reference");
    audio::frontend_backward(*cache.clip.chunks, cache.clip.frontend, P.frontend_w.value, dA,
                             gs.g[ix.frontend_w], gs.g[ix.frontend_b]);
  }
}

Vec gen_step(const ModelParams& P, const ClipContext& ctx, GenState& st, int prev_id,
             Vec* beta_out) {
  Vec logits = core_step(P, ctx, st, prev_id, nullptr, nullptr, beta_out);
  return num::log_softmax(logits);
}

double sequence_logprob(const ModelParams& P, const ClipContext& ctx,
                        const std::vector<int>& ids) {
  check_framing(ids);
  GenState st;
  init_state(P, st);
  double total = 0.0;
  for (size_t s = 0; s + 1 < ids.size(); ++s) {
    Vec lp = gen_step(P, ctx, st, ids[s]);
    total += lp[ids[s + 1]];
  }
  if (!std::isfinite(total)) throw NumericError("non-finite sequence log-probability");
  return total;
}

double sequence_logprob(const ModelParams& P, const AudioInput& in, const std::vector<int>& ids) {
  ClipContext ctx = prepare_clip(P, in);
  return sequence_logprob(P, ctx, ids);
}

DecodeHypothesis greedy_decode(const ModelParams& P, const AudioInput& in, int max_len) {
  if (max_len < 1) throw Error("max_len must be positive");
  const ClipContext ctx = prepare_clip(P, in);
  GenState st;
  init_state(P, st);

  DecodeHypothesis hyp;
  hyp.ids = {text::kSos};
  const size_t cap = static_cast<size_t>(max_len) + 2;
  while (!hyp.finished) {
    Vec lp = gen_step(P, ctx, st, hyp.ids.back());
    lp[text::kPad] = -std::numeric_limits<double>::infinity();
    lp[text::kSos] = -std::numeric_limits<double>::infinity();
    int best = -1;
    for (int j = 0; j < P.cfg.vocab; ++j)
      if (best < 0 || lp[j] > lp[best]) best = j;  // ties keep the lowest id
    hyp.ids.push_back(best);
    hyp.logprob += lp[best];
    hyp.finished = best == text::kEos || hyp.ids.size() == cap;
  }
  return hyp;
}

namespace {

struct LiveHyp {
  std::vector<int> ids;
  double logprob = 0.0;
  GenState st;
};

bool hyp_less(const DecodeHypothesis& a, const DecodeHypothesis& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.ids < b.ids;
}

}  // namespace

BeamResult beam_decode(const ModelParams& P, const AudioInput& in, int beam_size, int max_len) {
  if (beam_size < 1) throw Error("beam size must be at least 1");
  if (max_len < 1) throw Error("max_len must be positive");
  const ClipContext ctx = prepare_clip(P, in);
  const size_t cap = static_cast<size_t>(max_len) + 2;

  std::vector<LiveHyp> live(1);
  live[0].ids = {text::kSos};
  init_state(P, live[0].st);

  struct Cand {
    int parent;
    int tok;
    double score;
  };
  BeamResult result;
  while (!live.empty()) {
    std::vector<Cand> cands;
    cands.reserve(live.size() * P.cfg.vocab);
    for (int h = 0; h < static_cast<int>(live.size()); ++h) {
      Vec lp = gen_step(P, ctx, live[h].st, live[h].ids.back());
      for (int j = 0; j < P.cfg.vocab; ++j) {
        if (j == text::kPad || j == text::kSos) continue;
        cands.push_back({h, j, live[h].logprob + lp[j]});
      }
    }
    // Score descending; ties by the expanded token sequence, lexicographically.
    // All live hypotheses share a length, so comparing (parent ids, token)
    // element-wise is the full lexicographic order.
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      const auto& ia = live[a.parent].ids;
      const auto& ib = live[b.parent].ids;
      for (size_t i = 0; i < ia.size(); ++i)
        if (ia[i] != ib[i]) return ia[i] < ib[i];
      return a.tok < b.tok;
    });

    std::vector<LiveHyp> next;
    for (const Cand& c : cands) {
      std::vector<int> ids = live[c.parent].ids;
      ids.push_back(c.tok);
      const bool done = c.tok == text::kEos || ids.size() == cap;
      if (done) {
        result.completed.push_back({std::move(ids), c.score, true});
      } else {
        LiveHyp h;
        h.ids = std::move(ids);
        h.logprob = c.score;
        h.st = live[c.parent].st;
        next.push_back(std::move(h));
        if (static_cast<int>(next.size()) == beam_size) break;
      }
    }
    live.swap(next);
  }

  std::sort(result.completed.begin(), result.completed.end(), hyp_less);
  if (result.completed.empty()) throw Error("beam search finished nothing");
  result.best = result.completed.front();
  return result;
}

namespace {

void write_doubles_le(std::ostream& os, const Vec& v) {
  for (double x : v) {
    uint64_t bits;
    std::memcpy(&bits, &x, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

void read_doubles_le(std::istream& is, Vec& v, const std::string& path) {
  std::vector<unsigned char> raw(v.size() * 8);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw ParseError(path + ": truncated parameter blob");
  for (size_t i = 0; i < v.size(); ++i) {
    uint64_t bits = 0;
    for (int j = 0; j < 8; ++j) bits |= static_cast<uint64_t>(raw[8 * i + j]) << (8 * j);
    double x;
    std::memcpy(&x, &bits, 8);
    v[i] = x;
  }
}

json config_to_json(const ModelConfig& cfg) {
  json j;
  j["fusion"] = to_string(cfg.fusion);
  j["extractor"] = to_string(cfg.extractor);
  j["h_enc"] = cfg.h_enc;
  j["h_dec"] = cfg.h_dec;
  j["d"] = cfg.d;
  j["k"] = cfg.k;
  j["vocab"] = cfg.vocab;
  j["max_len"] = cfg.max_len;
  j["frontend_in"] = cfg.frontend_in;
  j["chunk_seconds"] = cfg.chunk_seconds;
  j["dropout"] = cfg.dropout;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.fusion = fusion_from_string(j.at("fusion").get<std::string>());
  cfg.extractor = extractor_from_string(j.at("extractor").get<std::string>());
  cfg.h_enc = j.at("h_enc").get<int>();
  cfg.h_dec = j.at("h_dec").get<int>();
  cfg.d = j.at("d").get<int>();
  cfg.k = j.at("k").get<int>();
  cfg.vocab = j.at("vocab").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  cfg.frontend_in = j.at("frontend_in").get<int>();
  cfg.chunk_seconds = j.at("chunk_seconds").get<double>();
  cfg.dropout = j.at("dropout").get<double>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& dir, const ModelParams& P, const text::Vocabulary& vocab) {
  if (vocab.size() != P.cfg.vocab)
    throw ShapeError("vocabulary size does not match the model configuration");
  fs::create_directories(dir);

  json manifest;
  manifest["format"] = 1;
  manifest["config"] = config_to_json(P.cfg);
  json plist = json::array();
  for (const ParamTensor* p : P.all()) {
    plist.push_back({{"name", p->name},
                     {"rows", p->value.rows},
                     {"cols", p->value.cols},
                     {"frozen", p->frozen}});
  }
  manifest["params"] = plist;

  {
    std::ofstream os(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!os) throw IoError("cannot write " + dir + "/manifest.json");
    os << manifest.dump(2) << "\n";
  }
  {
    std::ofstream os(fs::path(dir) / "params.bin", std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + dir + "/params.bin");
    for (const ParamTensor* p : P.all()) write_doubles_le(os, p->value.v);
    if (!os) throw IoError("write failed for " + dir + "/params.bin");
  }
  {
    std::ofstream os(fs::path(dir) / "vocab.txt", std::ios::trunc);
    if (!os) throw IoError("cannot write " + dir + "/vocab.txt");
    for (const std::string& t : vocab.tokens()) os << t << "\n";
    if (!os) throw IoError("write failed for " + dir + "/vocab.txt");
  }
}

Checkpoint load_checkpoint(const std::string& dir) {
  const std::string mpath = (fs::path(dir) / "manifest.json").string();
  std::ifstream is(mpath);
  if (!is) throw IoError("cannot open " + mpath);
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw ParseError(mpath + ": " + e.what());
  }

  Checkpoint ck;
  try {
    const ModelConfig cfg = config_from_json(manifest.at("config"));
    ck.params = allocate_params(cfg);

    auto listed = manifest.at("params");
    auto actual = ck.params.all();
    if (listed.size() != actual.size())
      throw ParseError(mpath + ": expected " + std::to_string(actual.size()) +
                       " parameters, manifest lists " + std::to_string(listed.size()));
    for (size_t i = 0; i < actual.size(); ++i) {
      const auto& e = listed[i];
      if (e.at("name").get<std::string>() != actual[i]->name ||
          e.at("rows").get<int>() != actual[i]->value.rows ||
          e.at("cols").get<int>() != actual[i]->value.cols)
        throw ParseError(mpath + ": parameter " + std::to_string(i) +
                         " does not match this configuration (" + actual[i]->name + ")");
      actual[i]->frozen = e.at("frozen").get<bool>();
    }
  } catch (const json::exception& e) {
    throw ParseError(mpath + ": " + e.what());
  }

  const std::string bpath = (fs::path(dir) / "params.bin").string();
  std::ifstream bs(bpath, std::ios::binary);
  if (!bs) throw IoError("cannot open " + bpath);
  for (ParamTensor* p : ck.params.all()) read_doubles_le(bs, p->value.v, bpath);
  char extra;
  if (bs.read(&extra, 1)) throw ParseError(bpath + ": trailing bytes after parameters");

  const std::string vpath = (fs::path(dir) / "vocab.txt").string();
  std::ifstream vs(vpath);
  if (!vs) throw IoError("cannot open " + vpath);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(vs, line)) tokens.push_back(line);
  ck.vocab = text::Vocabulary::from_tokens(std::move(tokens));
  if (ck.vocab.size() != ck.params.cfg.vocab)
    throw ParseError(vpath + ": vocabulary size does not match the checkpoint config");
  return ck;
}

}  // namespace mcap::model
