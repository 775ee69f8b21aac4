#include "mcap/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "mcap/adam.hpp"
#include "mcap/common.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mcap::train {

using model::ModelParams;

TrainItem load_item(const data::Pair& pair, const text::Vocabulary& vocab,
                    const model::ModelConfig& cfg) {
  TrainItem item;
  item.id = pair.id;
  item.ids = text::encode(text::tokenize(pair.caption), vocab, cfg.max_len);
  if (cfg.extractor == model::Extractor::kFrozenFile) {
    if (pair.features_path.empty()) throw Error(pair.id + " has no features file");
    item.features = audio::read_feature_file(pair.features_path);
    if (item.features.cols != cfg.k)
      throw ShapeError(pair.id + ": features are " + std::to_string(item.features.cols) +
                       " wide, model expects " + std::to_string(cfg.k));
  } else {
    if (pair.frames_path.empty()) throw Error(pair.id + " has no frames file");
    if (pair.duration <= 0.0) throw Error(pair.id + " has a non-positive duration");
    audio::AudioClip clip;
    clip.frames = audio::read_frames_file(pair.frames_path);
    clip.duration = pair.duration;
    clip.frame_rate = clip.frames.rows / pair.duration;
    item.chunks = audio::chunk(clip, cfg.chunk_seconds);
    if (item.chunks.feature_dim != cfg.frontend_in)
      throw ShapeError(pair.id + ": frames are " + std::to_string(item.chunks.feature_dim) +
                       " wide, frontend expects " + std::to_string(cfg.frontend_in));
  }
  return item;
}

model::AudioInput item_input(const TrainItem& item, const model::ModelConfig& cfg) {
  model::AudioInput in;
  if (cfg.extractor == model::Extractor::kFrozenFile)
    in.features = &item.features;
  else
    in.chunks = &item.chunks;
  return in;
}

namespace {

long long count_hits(const model::SeqCache& cache) {
  long long hits = 0;
  for (const model::StepCache& sc : cache.steps) {
    int best = 0;
    for (size_t j = 1; j < sc.probs.size(); ++j)
      if (sc.probs[j] > sc.probs[best]) best = static_cast<int>(j);
    if (best == sc.target_id) ++hits;
  }
  return hits;
}

[[noreturn]] void rethrow_batch(const std::vector<const TrainItem*>& batch,
                                const std::vector<std::string>& errs) {
  std::string msg = "batch failed:";
  for (size_t i = 0; i < errs.size(); ++i)
    if (!errs[i].empty()) msg += " " + batch[i]->id + " (" + errs[i] + ")";
  throw NumericError(msg);
}

}  // namespace

PassStats batch_pass(const ModelParams& P, const std::vector<const TrainItem*>& batch,
                     uint64_t dropout_seed, ModelParams* grad_into) {
  if (batch.empty()) throw Error("empty batch");
  const int n = static_cast<int>(batch.size());
  const bool training = grad_into != nullptr;

  std::vector<model::SeqCache> caches(n);
  std::vector<double> nll(n, 0.0);
  std::vector<long long> steps(n, 0), hits(n, 0);
  std::vector<std::string> errs(n);

  bool failed = false;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    try {
      Rng rng(mix_seed(dropout_seed, static_cast<uint64_t>(i)));
      const model::AudioInput in = item_input(*batch[i], P.cfg);
      nll[i] = model::seq_forward(P, in, batch[i]->ids, training ? &rng : nullptr, caches[i]);
      steps[i] = static_cast<long long>(batch[i]->ids.size()) - 1;
      hits[i] = count_hits(caches[i]);
    } catch (const std::exception& e) {
      errs[i] = e.what();
      failed = true;
    }
  }
  if (failed) rethrow_batch(batch, errs);

  PassStats stats;
  for (int i = 0; i < n; ++i) {
    stats.steps += steps[i];
    stats.hits += hits[i];
  }
  double total_nll = 0.0;
  for (int i = 0; i < n; ++i) total_nll += nll[i];
  stats.loss = total_nll / stats.steps;
  if (!std::isfinite(stats.loss)) rethrow_batch(batch, {"non-finite mean loss"});

  if (training) {
    const double scale = 1.0 / stats.steps;
    std::vector<model::GradSet> gsets(n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      try {
        gsets[i] = model::make_grads(P);
        model::seq_backward(P, caches[i], scale, gsets[i]);
      } catch (const std::exception& e) {
        errs[i] = e.what();
        failed = true;
      }
    }
    if (failed) rethrow_batch(batch, errs);
    for (int i = 0; i < n; ++i) model::add_grads(gsets[i], *grad_into);
  }
  return stats;
}

PassStats eval_pass(const ModelParams& P, const std::vector<TrainItem>& items, int batch_size) {
  if (batch_size < 1) throw Error("batch size must be positive");
  PassStats agg;
  double total_nll = 0.0;
  for (size_t start = 0; start < items.size(); start += batch_size) {
    std::vector<const TrainItem*> batch;
    for (size_t i = start; i < items.size() && i < start + batch_size; ++i)
      batch.push_back(&items[i]);
    const PassStats s = batch_pass(P, batch, 0, nullptr);
    total_nll += s.loss * s.steps;
    agg.steps += s.steps;
    agg.hits += s.hits;
  }
  agg.loss = agg.steps ? total_nll / agg.steps : 0.0;
  return agg;
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.max_epochs)
    throw Error("epoch " + std::to_string(epoch) + " outside [0, max_epochs)");
  return cfg.initial_lr * (1.0 - static_cast<double>(epoch) / cfg.max_epochs);
}

double clip_gradients(ModelParams& P, double max_norm) {
  double sq = 0.0;
  for (const num::ParamTensor* p : P.trainable())
    for (double g : p->grad.v) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (num::ParamTensor* p : P.trainable())
      for (double& g : p->grad.v) g *= scale;
  }
  return norm;
}

TrainResult train_loop(ModelParams& P, const text::Vocabulary& vocab,
                       const std::vector<TrainItem>& train_items,
                       const std::vector<TrainItem>& val_items, const TrainConfig& cfg) {
  if (train_items.empty()) throw Error("training split is empty");
  if (cfg.max_epochs < 1) throw Error("max_epochs must be positive");
  if (cfg.batch_size < 1) throw Error("batch size must be positive");
  if (cfg.patience < 1) throw Error("patience must be positive");

  const bool has_val = !val_items.empty();
  const std::string ckpt_root =
      cfg.out_dir.empty() ? "" : (fs::path(cfg.out_dir) / "checkpoints").string();
  std::ofstream log_os;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(ckpt_root);
    log_os.open(fs::path(cfg.out_dir) / "log.jsonl", std::ios::trunc);
    if (!log_os) throw IoError("cannot write " + cfg.out_dir + "/log.jsonl");
  }

  num::AdamState adam;
  adam.init(P.all());

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  ModelParams best_params = P;  // holds the best-so-far weight values

  const int n = static_cast<int>(train_items.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    Rng shuffle_rng(mix_seed(cfg.seed, 1 + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double epoch_nll = 0.0;
    long long epoch_steps = 0;
    int batch_index = 0;
    for (int start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      std::vector<const TrainItem*> batch;
      for (int i = start; i < n && i < start + cfg.batch_size; ++i)
        batch.push_back(&train_items[order[i]]);
      const uint64_t dropout_seed =
          mix_seed(mix_seed(cfg.seed, 0xD0), static_cast<uint64_t>(epoch) * 1000003ULL +
                                                 static_cast<uint64_t>(batch_index));
      P.zero_grads();
      const PassStats s = batch_pass(P, batch, dropout_seed, &P);
      epoch_nll += s.loss * s.steps;
      epoch_steps += s.steps;
      clip_gradients(P, cfg.clip_norm);
      num::adam_step(P.all(), adam, lr);
    }

    EpochStats es;
    es.epoch = epoch;
    es.lr = lr;
    es.train_loss = epoch_nll / epoch_steps;
    const PassStats train_eval = eval_pass(P, train_items, cfg.batch_size);
    es.train_token_acc = train_eval.token_acc();
    if (has_val) {
      const PassStats val_eval = eval_pass(P, val_items, cfg.batch_size);
      es.val_loss = val_eval.loss;
      es.val_token_acc = val_eval.token_acc();
    } else {
      es.val_loss = std::numeric_limits<double>::quiet_NaN();
    }
    result.log.push_back(es);
    result.epochs_run = epoch + 1;

    if (log_os) {
      json j;
      j["epoch"] = es.epoch;
      j["lr"] = es.lr;
      j["train_loss"] = es.train_loss;
      if (has_val) {
        j["val_loss"] = es.val_loss;
        j["val_token_acc"] = es.val_token_acc;
      }
      j["train_token_acc"] = es.train_token_acc;
      log_os << j.dump() << "\n";
      log_os.flush();
    }

    if (!ckpt_root.empty() && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0)
      model::save_checkpoint((fs::path(ckpt_root) / ("epoch_" + std::to_string(epoch))).string(),
                             P, vocab);

    if (has_val && es.val_loss < result.best_val_loss) {
      result.best_val_loss = es.val_loss;
      result.best_epoch = epoch;
      best_params = P;
      if (!ckpt_root.empty()) {
        result.best_dir = (fs::path(ckpt_root) / "best").string();
        model::save_checkpoint(result.best_dir, P, vocab);
      }
    }

    if (cfg.stop_train_acc > 0.0 && es.train_token_acc >= cfg.stop_train_acc) break;
    if (has_val && epoch - result.best_epoch >= cfg.patience) break;
  }

  if (!has_val) {
    // No validation signal: the final parameters stand in for "best".
    best_params = P;
    if (!ckpt_root.empty()) {
      result.best_dir = (fs::path(ckpt_root) / "best").string();
      model::save_checkpoint(result.best_dir, P, vocab);
    }
  } else {
    P = best_params;  // leave the caller holding the best weights
  }
  return result;
}

}  // namespace mcap::train
