#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcap/audio.hpp"
#include "mcap/data.hpp"
#include "mcap/model.hpp"
#include "mcap/text.hpp"

namespace mcap::train {

struct TrainConfig {
  double initial_lr = 1e-4;
  int max_epochs = 200;
  int batch_size = 16;
  int patience = 10;
  uint64_t seed = 0;
  double clip_norm = 5.0;       // <= 0 disables gradient clipping
  int checkpoint_every = 0;     // also save checkpoints/epoch_<n> every n epochs
  double stop_train_acc = -1.0; // > 0: stop once train token accuracy reaches it
  std::string out_dir;          // checkpoints/ and log.jsonl live here; empty: keep everything in memory
};

// One loaded pair, ready for the model.
struct TrainItem {
  std::string id;
  std::vector<int> ids;     // <sos> ... <eos>
  num::Matrix features;     // frozen extractor: L x k
  audio::ChunkSet chunks;   // trainable frontend input
};

TrainItem load_item(const data::Pair& pair, const text::Vocabulary& vocab,
                    const model::ModelConfig& cfg);
model::AudioInput item_input(const TrainItem& item, const model::ModelConfig& cfg);

struct PassStats {
  double loss = 0.0;  // flat mean NLL over all prediction steps
  long long steps = 0;
  long long hits = 0;  // argmax == target
  double token_acc() const { return steps ? static_cast<double>(hits) / steps : 0.0; }
};

// Teacher-forced pass over one batch. When grad_into is set, dropout is on
// (per-item mask streams derived from dropout_seed) and gradients accumulate
// into grad_into; items run in parallel but their per-item gradient buffers
// are summed in item order, so any thread count gives the same bits.
PassStats batch_pass(const model::ModelParams& P, const std::vector<const TrainItem*>& batch,
                     uint64_t dropout_seed, model::ModelParams* grad_into);

// Dropout-free, gradient-free pass over a whole split.
PassStats eval_pass(const model::ModelParams& P, const std::vector<TrainItem>& items,
                    int batch_size);

// Linear decay to zero: initial_lr * (1 - epoch / max_epochs).
double lr_at(int epoch, const TrainConfig& cfg);

// Global-norm clip over the trainable gradients; returns the pre-clip norm.
double clip_gradients(model::ModelParams& P, double max_norm);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // running mean over the epoch's batches
  double val_loss = 0.0;    // NaN without a validation split
  double train_token_acc = 0.0;
  double val_token_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> log;
  int best_epoch = -1;       // -1 without a validation split
  double best_val_loss = 0.0;
  std::string best_dir;      // checkpoints/best when out_dir set
  int epochs_run = 0;
};

// Teacher-forced training: per-epoch seeded shuffle, one Adam step per batch,
// validation loss per epoch, best-checkpoint tracking, early stopping after
// `patience` epochs without improvement. An empty validation split disables
// early stopping (the final parameters become "best"); an empty training
// split is an error.
TrainResult train_loop(model::ModelParams& P, const text::Vocabulary& vocab,
                       const std::vector<TrainItem>& train_items,
                       const std::vector<TrainItem>& val_items, const TrainConfig& cfg);

}  // namespace mcap::train
