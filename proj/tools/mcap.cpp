// mcap: music-captioning pipeline driver.
//
// Subcommands: gen-data | train | caption | eval | retrieve | grad-check.
// Exit codes: 0 success, 1 usage, 2 data/IO error, 3 numeric failure.
// MCAP_OUT_ROOT sets the default parent for every --out path.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mcap/audio.hpp"
#include "mcap/common.hpp"
#include "mcap/data.hpp"
#include "mcap/gradcheck.hpp"
#include "mcap/metrics.hpp"
#include "mcap/model.hpp"
#include "mcap/text.hpp"
#include "mcap/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path out_root() {
  const char* env = std::getenv("MCAP_OUT_ROOT");
  return env && *env ? fs::path(env) : fs::path(".");
}

fs::path resolve_out(const std::string& out, const std::string& fallback) {
  if (!out.empty()) return fs::path(out);
  return out_root() / fallback;
}

void write_run_config(const fs::path& dir, const json& cfg) {
  fs::create_directories(dir);
  std::ofstream os(dir / "run_config.json", std::ios::trunc);
  if (!os) throw mcap::IoError("cannot write " + (dir / "run_config.json").string());
  os << cfg.dump(2) << "\n";
}

fs::path resolve_manifest(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) p /= "manifest.jsonl";
  if (!fs::exists(p)) throw mcap::IoError("no manifest at " + p.string());
  return p;
}

std::vector<mcap::data::Pair> select_split(const std::vector<mcap::data::Pair>& pairs,
                                           const std::string& splits_path,
                                           const std::string& split_name) {
  if (splits_path.empty()) return pairs;
  const mcap::data::Splits sp = mcap::data::read_splits(splits_path);
  const std::vector<std::string>* ids = nullptr;
  if (split_name == "train")
    ids = &sp.train;
  else if (split_name == "val")
    ids = &sp.val;
  else if (split_name == "test")
    ids = &sp.test;
  else
    throw mcap::Error("unknown split " + split_name);
  std::map<std::string, const mcap::data::Pair*> by_id;
  for (const auto& p : pairs) by_id[p.id] = &p;
  std::vector<mcap::data::Pair> out;
  out.reserve(ids->size());
  for (const std::string& id : *ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw mcap::Error("split id " + id + " is not in the manifest");
    out.push_back(*it->second);
  }
  return out;
}

std::string join_tokens(const std::vector<std::string>& toks) {
  std::string s;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += toks[i];
  }
  return s;
}

// ---- gen-data ----

struct GenDataArgs {
  mcap::data::SynthConfig cfg;
  std::string out;
};

int run_gen_data(GenDataArgs& a) {
  const fs::path out = resolve_out(a.out, "corpus");
  a.cfg.out_dir = out.string();
  const mcap::data::SynthResult res = mcap::data::generate_synthetic(a.cfg);
  write_run_config(out, json{{"command", "gen-data"},
                             {"seed", a.cfg.seed},
                             {"pairs", a.cfg.pairs},
                             {"classes", a.cfg.classes},
                             {"feature_dim", a.cfg.feature_dim},
                             {"frame_rate", a.cfg.frame_rate},
                             {"min_duration", a.cfg.min_duration},
                             {"max_duration", a.cfg.max_duration},
                             {"chunk_seconds", a.cfg.chunk_seconds},
                             {"noise_sigma", a.cfg.noise_sigma},
                             {"out", out.string()}});
  std::cout << "wrote " << res.pairs.size() << " pairs to " << res.manifest_path << "\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string data, out, fusion = "early", pretrained = "frozen-file";
  std::string embeddings;
  int hidden = 256, embed_dim = 300, max_len = 22, min_freq = 2, k = 8;
  double dropout = 0.25, chunk_seconds = 3.0;
  double train_frac = 0.6, val_frac = 0.2, test_frac = 0.2;
  mcap::train::TrainConfig tc;
};

int run_train(TrainArgs& a) {
  const fs::path out = resolve_out(a.out, "run");
  fs::create_directories(out);

  const fs::path manifest = resolve_manifest(a.data);
  const std::vector<mcap::data::Pair> raw = mcap::data::read_manifest(manifest.string());
  const mcap::data::FilterResult fr = mcap::data::filter_pairs(raw);
  mcap::data::write_rejection_log((out / "rejected.tsv").string(), fr.rejected);

  mcap::data::SplitSpec spec;
  spec.train = a.train_frac;
  spec.val = a.val_frac;
  spec.test = a.test_frac;
  spec.seed = mcap::mix_seed(a.tc.seed, 11);
  const mcap::data::Splits splits = mcap::data::split(fr.kept, spec);
  mcap::data::write_splits((out / "splits.json").string(), splits);

  std::map<std::string, const mcap::data::Pair*> by_id;
  for (const auto& p : fr.kept) by_id[p.id] = &p;
  const auto pairs_of = [&](const std::vector<std::string>& ids) {
    std::vector<const mcap::data::Pair*> out_pairs;
    for (const std::string& id : ids) out_pairs.push_back(by_id.at(id));
    return out_pairs;
  };
  const std::vector<const mcap::data::Pair*> train_pairs = pairs_of(splits.train);
  const std::vector<const mcap::data::Pair*> val_pairs = pairs_of(splits.val);
  if (train_pairs.empty()) throw mcap::Error("training split is empty after filtering");

  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(train_pairs.size());
  for (const auto* p : train_pairs) corpus.push_back(mcap::text::tokenize(p->caption));
  const mcap::text::Vocabulary vocab = mcap::text::Vocabulary::build(corpus, a.min_freq);

  const uint64_t emb_seed = mcap::mix_seed(a.tc.seed, 12);
  const mcap::text::EmbeddingTable emb =
      a.embeddings.empty()
          ? mcap::text::random_embeddings(vocab, a.embed_dim, emb_seed)
          : mcap::text::load_embeddings(a.embeddings, vocab, a.embed_dim, emb_seed);

  mcap::model::ModelConfig mc;
  mc.fusion = mcap::model::fusion_from_string(a.fusion);
  mc.extractor = mcap::model::extractor_from_string(a.pretrained);
  mc.h_enc = mc.h_dec = a.hidden;
  mc.d = a.embed_dim;
  mc.vocab = vocab.size();
  mc.max_len = a.max_len;
  mc.dropout = a.dropout;
  mc.chunk_seconds = a.chunk_seconds;
  if (mc.extractor == mcap::model::Extractor::kFrozenFile) {
    const mcap::data::Pair* first = train_pairs.front();
    if (first->features_path.empty())
      throw mcap::Error("frozen-file mode needs feature files (pair " + first->id + " has none)");
    mc.k = mcap::audio::read_feature_file(first->features_path).cols;
  } else {
    const mcap::data::Pair* first = train_pairs.front();
    if (first->frames_path.empty())
      throw mcap::Error("trainable mode needs raw frame files (pair " + first->id + " has none)");
    mc.frontend_in = mcap::audio::read_frames_file(first->frames_path).cols;
    mc.k = a.k;
  }
  mc.validate();

  mcap::model::ModelParams P =
      mcap::model::init_params(mc, emb, mcap::mix_seed(a.tc.seed, 13));

  const auto load_items = [&](const std::vector<const mcap::data::Pair*>& ps) {
    std::vector<mcap::train::TrainItem> items;
    items.reserve(ps.size());
    for (const auto* p : ps) items.push_back(mcap::train::load_item(*p, vocab, mc));
    return items;
  };
  const std::vector<mcap::train::TrainItem> train_items = load_items(train_pairs);
  const std::vector<mcap::train::TrainItem> val_items = load_items(val_pairs);

  a.tc.out_dir = out.string();
  write_run_config(out, json{{"command", "train"},
                             {"data", manifest.string()},
                             {"out", out.string()},
                             {"fusion", a.fusion},
                             {"pretrained", a.pretrained},
                             {"hidden", a.hidden},
                             {"embed_dim", a.embed_dim},
                             {"k", mc.k},
                             {"frontend_in", mc.frontend_in},
                             {"max_len", a.max_len},
                             {"min_freq", a.min_freq},
                             {"dropout", a.dropout},
                             {"chunk_seconds", a.chunk_seconds},
                             {"embeddings", a.embeddings},
                             {"vocab_size", vocab.size()},
                             {"train_frac", a.train_frac},
                             {"val_frac", a.val_frac},
                             {"test_frac", a.test_frac},
                             {"lr", a.tc.initial_lr},
                             {"epochs", a.tc.max_epochs},
                             {"batch_size", a.tc.batch_size},
                             {"patience", a.tc.patience},
                             {"clip_norm", a.tc.clip_norm},
                             {"checkpoint_every", a.tc.checkpoint_every},
                             {"stop_train_acc", a.tc.stop_train_acc},
                             {"seed", a.tc.seed},
                             {"split_sizes",
                              {{"train", splits.train.size()},
                               {"val", splits.val.size()},
                               {"test", splits.test.size()}}}});

  std::cout << "training on " << train_items.size() << " pairs (val " << val_items.size()
            << "), vocab " << vocab.size() << ", fusion " << a.fusion << ", extractor "
            << a.pretrained << "\n";
  const mcap::train::TrainResult res = mcap::train::train_loop(P, vocab, train_items, val_items, a.tc);
  std::cout << "ran " << res.epochs_run << " epochs";
  if (res.best_epoch >= 0)
    std::cout << ", best val loss " << res.best_val_loss << " at epoch " << res.best_epoch;
  std::cout << "; best checkpoint: " << res.best_dir << "\n";
  return 0;
}

// ---- caption ----

struct CaptionArgs {
  std::string ckpt, data, out, splits, split = "test";
  std::string decode = "greedy";
  int beam_size = 5;
};

int run_caption(CaptionArgs& a) {
  const fs::path out = resolve_out(a.out, "captions");
  const mcap::model::Checkpoint ck = mcap::model::load_checkpoint(a.ckpt);
  const fs::path manifest = resolve_manifest(a.data);
  const std::vector<mcap::data::Pair> pairs =
      select_split(mcap::data::read_manifest(manifest.string()), a.splits, a.split);
  if (pairs.empty()) throw mcap::Error("no pairs selected for captioning");

  std::vector<std::pair<std::string, std::string>> rows;
  rows.reserve(pairs.size());
  for (const mcap::data::Pair& p : pairs) {
    const mcap::train::TrainItem item = mcap::train::load_item(p, ck.vocab, ck.params.cfg);
    const mcap::model::AudioInput in = mcap::train::item_input(item, ck.params.cfg);
    mcap::model::DecodeHypothesis hyp;
    if (a.decode == "greedy")
      hyp = mcap::model::greedy_decode(ck.params, in, ck.params.cfg.max_len);
    else
      hyp = mcap::model::beam_decode(ck.params, in, a.beam_size, ck.params.cfg.max_len).best;
    rows.emplace_back(p.id, join_tokens(mcap::text::decode(hyp.ids, ck.vocab)));
  }
  fs::create_directories(out);
  mcap::metrics::write_caption_file((out / "captions.tsv").string(), rows);
  write_run_config(out, json{{"command", "caption"},
                             {"ckpt", a.ckpt},
                             {"data", manifest.string()},
                             {"splits", a.splits},
                             {"split", a.splits.empty() ? "all" : a.split},
                             {"decode", a.decode},
                             {"beam_size", a.beam_size},
                             {"out", out.string()}});
  std::cout << "wrote " << rows.size() << " captions to " << (out / "captions.tsv").string()
            << "\n";
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string data, candidates, out;
};

int run_eval(EvalArgs& a) {
  const fs::path out = resolve_out(a.out, "eval");
  const fs::path manifest = resolve_manifest(a.data);
  const std::vector<mcap::data::Pair> pairs = mcap::data::read_manifest(manifest.string(), false);
  std::map<std::string, const mcap::data::Pair*> by_id;
  for (const auto& p : pairs) by_id[p.id] = &p;

  const auto entries = mcap::metrics::read_caption_file(a.candidates);
  if (entries.empty()) throw mcap::Error("no candidate captions in " + a.candidates);
  std::vector<mcap::metrics::TokenList> cands, refs;
  for (const auto& [id, caption] : entries) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw mcap::Error("candidate id " + id + " is not in the manifest");
    cands.push_back(mcap::text::tokenize(caption));
    refs.push_back(mcap::text::tokenize(it->second->caption));
  }

  const mcap::metrics::MetricReport report = mcap::metrics::evaluate_captions(cands, refs);
  fs::create_directories(out);
  mcap::metrics::write_report_tsv((out / "report.tsv").string(), report);
  mcap::metrics::write_report_json((out / "report.json").string(), report);
  write_run_config(out, json{{"command", "eval"},
                             {"data", manifest.string()},
                             {"candidates", a.candidates},
                             {"out", out.string()},
                             {"pairs", entries.size()}});
  std::printf("BLEU-1 %.4f  BLEU-2 %.4f  BLEU-3 %.4f  BLEU-4 %.4f\n", report.bleu1, report.bleu2,
              report.bleu3, report.bleu4);
  std::printf("ROUGE-L %.4f  CIDEr %.4f  unk %.4f  repetitions %lld\n", report.rouge_l,
              report.cider, report.stats.unk_rate, report.stats.repetitions);
  return 0;
}

// ---- retrieve ----

struct RetrieveArgs {
  std::string ckpt, data, out, splits, split = "test";
};

int run_retrieve(RetrieveArgs& a) {
  const fs::path out = resolve_out(a.out, "retrieval");
  const mcap::model::Checkpoint ck = mcap::model::load_checkpoint(a.ckpt);
  const fs::path manifest = resolve_manifest(a.data);
  const std::vector<mcap::data::Pair> pairs =
      select_split(mcap::data::read_manifest(manifest.string()), a.splits, a.split);
  if (pairs.empty()) throw mcap::Error("no pairs selected for retrieval");

  std::vector<mcap::train::TrainItem> pool;
  std::vector<mcap::metrics::RetrievalQuery> queries;
  pool.reserve(pairs.size());
  for (const mcap::data::Pair& p : pairs) {
    pool.push_back(mcap::train::load_item(p, ck.vocab, ck.params.cfg));
    queries.push_back({p.id, pool.back().ids, p.id});
  }
  const mcap::metrics::RetrievalResult res = mcap::metrics::retrieval_eval(ck.params, queries, pool);

  fs::create_directories(out);
  {
    std::ofstream os(out / "ranks.tsv", std::ios::trunc);
    if (!os) throw mcap::IoError("cannot write " + (out / "ranks.tsv").string());
    for (size_t q = 0; q < queries.size(); ++q)
      os << queries[q].id << "\t" << res.ranks[q] << "\n";
  }
  {
    json j{{"r_at_1", res.metrics.r_at_1},
           {"r_at_5", res.metrics.r_at_5},
           {"r_at_10", res.metrics.r_at_10},
           {"median_rank", res.metrics.median_rank},
           {"queries", queries.size()},
           {"pool", pool.size()}};
    std::ofstream os(out / "retrieval.json", std::ios::trunc);
    if (!os) throw mcap::IoError("cannot write " + (out / "retrieval.json").string());
    os << j.dump(2) << "\n";
  }
  write_run_config(out, json{{"command", "retrieve"},
                             {"ckpt", a.ckpt},
                             {"data", manifest.string()},
                             {"splits", a.splits},
                             {"split", a.splits.empty() ? "all" : a.split},
                             {"out", out.string()}});
  std::printf("R@1 %.2f  R@5 %.2f  R@10 %.2f  median rank %.1f  (%zu queries)\n",
              res.metrics.r_at_1, res.metrics.r_at_5, res.metrics.r_at_10,
              res.metrics.median_rank, queries.size());
  return 0;
}

// ---- grad-check ----

struct GradCheckArgs {
  std::string dims = "small", fusion = "all", pretrained = "all";
  // Central differences lose digits both ways: eps^2 truncation above,
  // |f|*ulp/eps cancellation below. 3e-4 sits in the flat bottom for these
  // dims (worst observed error 1.5e-5 against a 1e-4 gate).
  double eps = 3e-4, tol = 1e-4;
  uint64_t seed = 0;
};

int run_grad_check(GradCheckArgs& a) {
  // "small" is the one published size: H=8, V=24, k=6, d=8, L=3, T=5.
  if (a.dims != "small") throw mcap::Error("unknown --dims preset " + a.dims);
  const int H = 8, V = 24, K = 6, D = 8, L = 3, T = 5, F = 5, FRAMES = 6;

  std::vector<mcap::model::Fusion> fusions;
  if (a.fusion == "all")
    fusions = {mcap::model::Fusion::kEarly, mcap::model::Fusion::kLate,
               mcap::model::Fusion::kAttention};
  else
    fusions = {mcap::model::fusion_from_string(a.fusion)};
  std::vector<mcap::model::Extractor> extractors;
  if (a.pretrained == "all")
    extractors = {mcap::model::Extractor::kFrozenFile, mcap::model::Extractor::kTrainable};
  else
    extractors = {mcap::model::extractor_from_string(a.pretrained)};

  bool all_ok = true;
  for (const auto fusion : fusions) {
    for (const auto extractor : extractors) {
      mcap::model::ModelConfig mc;
      mc.fusion = fusion;
      mc.extractor = extractor;
      mc.h_enc = mc.h_dec = H;
      mc.d = D;
      mc.k = K;
      mc.vocab = V;
      mc.max_len = T;
      mc.frontend_in = extractor == mcap::model::Extractor::kTrainable ? F : 0;
      mc.dropout = 0.0;
      mc.validate();

      mcap::Rng rng(mcap::mix_seed(a.seed, 0x6C));
      mcap::text::EmbeddingTable emb;
      emb.table = mcap::num::Matrix(V, D);
      for (double& x : emb.table.v) x = rng.uniform(-0.5, 0.5);
      mcap::model::ModelParams P = mcap::model::init_params(mc, emb, rng.next_u64());
      // Redraw at a larger magnitude than the training init: near-zero hidden
      // states make recurrent-weight gradients vanish, and the check would
      // then compare finite-difference noise against noise.
      for (mcap::num::ParamTensor* p : P.all())
        if (!p->frozen)
          for (double& x : p->value.v) x = rng.uniform(-0.5, 0.5);

      mcap::num::Matrix features(L, K);
      for (double& x : features.v) x = rng.uniform(-1.0, 1.0);
      mcap::audio::ChunkSet chunks;
      chunks.chunk_seconds = mc.chunk_seconds;
      chunks.frames_per_chunk = FRAMES;
      chunks.feature_dim = F;
      for (int i = 0; i < L; ++i) {
        mcap::num::Matrix m(FRAMES, F);
        for (double& x : m.v) x = rng.uniform(-1.0, 1.0);
        chunks.chunks.push_back(std::move(m));
      }
      mcap::model::AudioInput in;
      if (extractor == mcap::model::Extractor::kFrozenFile)
        in.features = &features;
      else
        in.chunks = &chunks;

      std::vector<int> ids{mcap::text::kSos};
      for (int t = 0; t < T; ++t)
        ids.push_back(rng.uniform_int(mcap::text::kNumSpecials, V - 1));
      ids.push_back(mcap::text::kEos);

      const auto loss_fn = [&]() {
        mcap::model::SeqCache cache;
        const double loss = mcap::model::seq_forward(P, in, ids, nullptr, cache);
        mcap::model::GradSet gs = mcap::model::make_grads(P);
        mcap::model::seq_backward(P, cache, 1.0, gs);
        mcap::model::add_grads(gs, P);
        return loss;
      };
      const auto entries = mcap::num::grad_check(loss_fn, P.all(), a.eps, a.tol);
      std::printf("fusion=%s extractor=%s\n", mcap::model::to_string(fusion).c_str(),
                  mcap::model::to_string(extractor).c_str());
      for (const auto& e : entries) {
        std::printf("  %-16s max rel err %.3e  %s\n", e.name.c_str(), e.max_rel_err,
                    e.ok ? "ok" : "FAIL");
        all_ok = all_ok && e.ok;
      }
    }
  }
  if (!all_ok) throw mcap::NumericError("gradient check failed (see table above)");
  std::cout << "all gradients within tolerance " << a.tol << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"music captioning: synthetic data, training, decoding, metrics, retrieval"};
  app.require_subcommand(1);
  app.set_config("--config", "", "structured config file mirroring the flags");

  GenDataArgs gd;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic audio-caption corpus");
  gen->add_option("--out", gd.out, "output directory (default $MCAP_OUT_ROOT/corpus)");
  gen->add_option("--seed", gd.cfg.seed, "master seed");
  gen->add_option("--pairs", gd.cfg.pairs, "number of pairs")->check(CLI::PositiveNumber);
  gen->add_option("--classes", gd.cfg.classes, "latent classes")->check(CLI::Range(2, 15));
  gen->add_option("--feature-dim", gd.cfg.feature_dim, "frame/feature width")
      ->check(CLI::PositiveNumber);
  gen->add_option("--frame-rate", gd.cfg.frame_rate, "frames per second")
      ->check(CLI::PositiveNumber);
  gen->add_option("--min-duration", gd.cfg.min_duration, "seconds");
  gen->add_option("--max-duration", gd.cfg.max_duration, "seconds");
  gen->add_option("--chunk-seconds", gd.cfg.chunk_seconds, "chunk length for feature files");
  gen->add_option("--noise-sigma", gd.cfg.noise_sigma, "frame noise level");

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "train a captioning model");
  train->add_option("--data", tr.data, "corpus directory or manifest path")->required();
  train->add_option("--out", tr.out, "run directory (default $MCAP_OUT_ROOT/run)");
  train->add_option("--fusion", tr.fusion, "audio-text fusion mode")
      ->check(CLI::IsMember({"early", "late", "attention"}));
  train->add_option("--pretrained", tr.pretrained, "feature extractor variant")
      ->check(CLI::IsMember({"frozen-file", "trainable"}));
  train->add_option("--hidden", tr.hidden, "LSTM width")->check(CLI::PositiveNumber);
  train->add_option("--embed-dim", tr.embed_dim, "word embedding width")
      ->check(CLI::PositiveNumber);
  train->add_option("--k", tr.k, "trainable frontend output width")->check(CLI::PositiveNumber);
  train->add_option("--max-len", tr.max_len, "caption length cap")->check(CLI::PositiveNumber);
  train->add_option("--min-freq", tr.min_freq, "vocabulary frequency cutoff")
      ->check(CLI::PositiveNumber);
  train->add_option("--embeddings", tr.embeddings, "pretrained word-vector file");
  train->add_option("--dropout", tr.dropout, "dropout rate")->check(CLI::Range(0.0, 0.95));
  train->add_option("--chunk-seconds", tr.chunk_seconds, "chunk length (trainable mode)");
  train->add_option("--train-frac", tr.train_frac, "train split fraction");
  train->add_option("--val-frac", tr.val_frac, "val split fraction");
  train->add_option("--test-frac", tr.test_frac, "test split fraction");
  train->add_option("--lr", tr.tc.initial_lr, "initial learning rate");
  train->add_option("--epochs", tr.tc.max_epochs, "epoch budget")->check(CLI::PositiveNumber);
  train->add_option("--batch-size", tr.tc.batch_size, "batch size")->check(CLI::PositiveNumber);
  train->add_option("--patience", tr.tc.patience, "early-stopping patience");
  train->add_option("--clip-norm", tr.tc.clip_norm, "global gradient norm cap (<=0 disables)");
  train->add_option("--checkpoint-every", tr.tc.checkpoint_every, "periodic checkpoint stride");
  train->add_option("--stop-train-acc", tr.tc.stop_train_acc,
                    "stop once train token accuracy reaches this");
  train->add_option("--seed", tr.tc.seed, "master seed");

  CaptionArgs cap;
  CLI::App* caption = app.add_subcommand("caption", "decode captions for a split");
  caption->add_option("--ckpt", cap.ckpt, "checkpoint directory")->required();
  caption->add_option("--data", cap.data, "corpus directory or manifest path")->required();
  caption->add_option("--out", cap.out, "output directory (default $MCAP_OUT_ROOT/captions)");
  caption->add_option("--splits", cap.splits, "splits.json from the training run");
  caption->add_option("--split", cap.split, "which split to caption")
      ->check(CLI::IsMember({"train", "val", "test"}));
  caption->add_option("--decode", cap.decode, "decoding strategy")
      ->check(CLI::IsMember({"greedy", "beam"}));
  caption->add_option("--beam-size", cap.beam_size, "beam width")->check(CLI::PositiveNumber);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score candidate captions against references");
  eval_cmd->add_option("--data", ev.data, "corpus directory or manifest path")->required();
  eval_cmd->add_option("--candidates", ev.candidates, "candidate caption file (id<TAB>caption)")
      ->required();
  eval_cmd->add_option("--out", ev.out, "output directory (default $MCAP_OUT_ROOT/eval)");

  RetrieveArgs rt;
  CLI::App* retrieve = app.add_subcommand("retrieve", "text-to-audio retrieval by caption likelihood");
  retrieve->add_option("--ckpt", rt.ckpt, "checkpoint directory")->required();
  retrieve->add_option("--data", rt.data, "corpus directory or manifest path")->required();
  retrieve->add_option("--out", rt.out, "output directory (default $MCAP_OUT_ROOT/retrieval)");
  retrieve->add_option("--splits", rt.splits, "splits.json from the training run");
  retrieve->add_option("--split", rt.split, "which split to query")
      ->check(CLI::IsMember({"train", "val", "test"}));

  GradCheckArgs gc;
  CLI::App* gradcheck = app.add_subcommand("grad-check", "finite-difference gradient verification");
  gradcheck->add_option("--dims", gc.dims, "dimension preset")->check(CLI::IsMember({"small"}));
  gradcheck->add_option("--fusion", gc.fusion, "restrict to one fusion mode")
      ->check(CLI::IsMember({"all", "early", "late", "attention"}));
  gradcheck->add_option("--pretrained", gc.pretrained, "restrict to one extractor")
      ->check(CLI::IsMember({"all", "frozen-file", "trainable"}));
  gradcheck->add_option("--eps", gc.eps, "finite-difference step");
  gradcheck->add_option("--tol", gc.tol, "max relative error allowed");
  gradcheck->add_option("--seed", gc.seed, "master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen_data(gd);
    if (train->parsed()) return run_train(tr);
    if (caption->parsed()) return run_caption(cap);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (retrieve->parsed()) return run_retrieve(rt);
    if (gradcheck->parsed()) return run_grad_check(gc);
  } catch (const mcap::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const mcap::ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 3;
  } catch (const mcap::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
