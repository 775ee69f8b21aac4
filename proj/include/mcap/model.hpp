#pragma once

#include <string>
#include <vector>

#include "mcap/audio.hpp"
#include "mcap/matrix.hpp"
#include "mcap/nn.hpp"
#include "mcap/rng.hpp"
#include "mcap/text.hpp"

namespace mcap::model {

enum class Fusion { kEarly, kLate, kAttention };
enum class Extractor { kFrozenFile, kTrainable };

std::string to_string(Fusion f);
Fusion fusion_from_string(const std::string& s);
std::string to_string(Extractor e);
Extractor extractor_from_string(const std::string& s);

struct ModelConfig {
  Fusion fusion = Fusion::kEarly;
  Extractor extractor = Extractor::kFrozenFile;
  int h_enc = 256, h_dec = 256;
  int d = 300;    // word embedding width
  int k = 8;      // chunk feature width
  int vocab = 0;  // V
  int max_len = 22;
  int frontend_in = 0;         // F consumed by the trainable frontend
  double chunk_seconds = 3.0;  // raw frames are chunked at this length
  double dropout = 0.25;

  // Encoder input: [projected audio ; word] in early fusion, word alone otherwise.
  int enc_input_dim() const { return fusion == Fusion::kEarly ? 2 * d : d; }
  // Decoder input per mode: h_enc | [W_a a~ ; h_enc] | [a^ ; h_enc].
  int dec_input_dim() const {
    switch (fusion) {
      case Fusion::kEarly: return h_enc;
      case Fusion::kLate: return 2 * h_enc;
      default: return k + h_enc;
    }
  }
  void validate() const;
};

// Every learnable tensor, named for checkpoints and gradient reports. Only
// the tensors the configured mode uses are allocated; all() lists the
// allocated ones in a fixed order.
struct ModelParams {
  ModelConfig cfg;
  num::ParamTensor embed;                     // "embed.table" V x d (frozen)
  num::ParamTensor frontend_w, frontend_b;    // trainable extractor
  num::ParamTensor enc_w_x, enc_w_h, enc_b;   // encoder LSTM
  num::ParamTensor proj_early_w, proj_early_b;  // k -> d audio projection
  num::ParamTensor proj_late_w;               // k -> H_enc projection (no bias)
  num::ParamTensor att_w_a, att_w_h, att_w;   // attention: H_dec x k, H_dec x H_enc, H_dec x 1
  num::ParamTensor dec_w_x, dec_w_h, dec_b;   // decoder LSTM
  num::ParamTensor out_w, out_b;              // V x H_dec, V x 1

  std::vector<num::ParamTensor*> all();
  std::vector<const num::ParamTensor*> all() const;
  std::vector<num::ParamTensor*> trainable();
  void zero_grads();
};

// Weights drawn uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; biases zero
// except the LSTM forget-gate block, which starts at 1.
ModelParams init_params(const ModelConfig& cfg, const text::EmbeddingTable& emb, uint64_t seed);

// Per-clip model input: precomputed chunk features (frozen extractor) or raw
// chunks for the trainable frontend. Exactly one must be set, matching the
// configured extractor.
struct AudioInput {
  const num::Matrix* features = nullptr;    // L x k
  const audio::ChunkSet* chunks = nullptr;  // trainable frontend input
};

// Quantities fixed for a clip across decoding steps.
struct ClipContext {
  num::Matrix A;         // L x k chunk features
  num::Vec a_tilde;      // mean-pooled track embedding (early/late)
  num::Vec audio_proj;   // early: projection of a_tilde to d
  num::Vec late_q;       // late: W_a a_tilde (H_enc)
  audio::FrontendCache frontend;            // filled when caching for backward
  const audio::ChunkSet* chunks = nullptr;  // kept for the frontend backward
};

ClipContext prepare_clip(const ModelParams& P, const AudioInput& in, bool cache_frontend = false);

struct GenState {
  num::Vec h_enc, c_enc, h_dec, c_dec;
};
void init_state(const ModelParams& P, GenState& st);

// One encoder LSTM step. audio_proj must be the projected track embedding in
// early fusion and empty otherwise (audio never reaches the encoder in late
// or attention mode).
void encoder_step(const ModelParams& P, const num::Vec& w_embedded, const num::Vec& audio_proj,
                  num::Vec& h, num::Vec& c, num::LstmCache* cache = nullptr);

// Soft top-down attention over chunk features:
// e_i = w^T tanh(W_a a_i + W_h h_enc), beta = softmax(e), returns sum_i beta_i a_i.
num::Vec attend(const ModelParams& P, const num::Matrix& A, const num::Vec& h_enc,
                num::Vec& beta_out, num::Matrix* tanh_cache = nullptr);

// One decoder LSTM step plus the output layer; returns logits over V.
num::Vec decoder_step(const ModelParams& P, const num::Vec& x_dec, num::Vec& h, num::Vec& c,
                      num::LstmCache* cache = nullptr);

// Everything the backward pass needs from one teacher-forced step.
struct StepCache {
  int prev_id = -1, target_id = -1;
  num::Vec w_mask, x_mask;  // dropout masks (empty in eval mode)
  num::LstmCache enc, dec;
  num::Vec h_enc_out, h_dec_out;
  num::Matrix att_tanh;  // L x H_dec
  num::Vec beta;         // L
  num::Vec probs;        // V
};

struct SeqCache {
  ClipContext clip;
  std::vector<StepCache> steps;
};

// Teacher-forced forward over ids = [<sos>, w_1..w_T, <eos>]; returns the
// summed NLL over the ids.size()-1 prediction steps. rng enables dropout
// (training); pass nullptr for eval.
double seq_forward(const ModelParams& P, const AudioInput& in, const std::vector<int>& ids,
                   Rng* rng, SeqCache& cache);

// Per-sequence gradient buffer, parallel to ModelParams::all(). Frozen
// entries stay empty. Lets batch items run in parallel and still sum in a
// fixed order.
struct GradSet {
  std::vector<num::Matrix> g;
};
GradSet make_grads(const ModelParams& P);
void add_grads(const GradSet& src, ModelParams& P);       // into ParamTensor::grad
void accumulate(GradSet& dst, const GradSet& src);

// Backprop through the cached sequence; every step's dlogits is scaled by
// `scale` (1/N for a flat batch mean over N steps).
void seq_backward(const ModelParams& P, const SeqCache& cache, double scale, GradSet& gs);

// One generation step: embeds prev_id, advances the state, returns
// log-probabilities over V. beta_out receives attention weights when set.
num::Vec gen_step(const ModelParams& P, const ClipContext& ctx, GenState& st, int prev_id,
                  num::Vec* beta_out = nullptr);

// Sum over t>=1 of log P(ids[t] | ids[<t], audio); dropout off.
double sequence_logprob(const ModelParams& P, const AudioInput& in, const std::vector<int>& ids);
double sequence_logprob(const ModelParams& P, const ClipContext& ctx, const std::vector<int>& ids);

struct DecodeHypothesis {
  std::vector<int> ids;  // starts at <sos>; includes <eos> when emitted
  double logprob = 0.0;
  bool finished = false;
};

// Argmax decoding; ties break toward the lowest token id. <pad>/<sos> are
// never candidates. Stops at <eos> or when ids reaches max_len + 2 tokens.
DecodeHypothesis greedy_decode(const ModelParams& P, const AudioInput& in, int max_len);

struct BeamResult {
  DecodeHypothesis best;
  std::vector<DecodeHypothesis> completed;  // sorted best-first
};

// Beam search on summed log-probabilities (no length normalization).
// Finished hypotheses leave the beam for the completed pool and the beam
// refills from the remaining expansions.
BeamResult beam_decode(const ModelParams& P, const AudioInput& in, int beam_size, int max_len);

// Checkpoint directory: manifest.json (config + ordered parameter table),
// params.bin (float64 little-endian values concatenated in manifest order),
// vocab.txt (one token per line in id order).
void save_checkpoint(const std::string& dir, const ModelParams& P, const text::Vocabulary& vocab);

struct Checkpoint {
  ModelParams params;
  text::Vocabulary vocab;
};
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace mcap::model
