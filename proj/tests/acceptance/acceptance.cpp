// Acceptance gate: one pass/fail line per criterion, exit code = number of
// failed criteria. Library properties run in-process; pipeline criteria drive
// the CLI binary named by MCAP_BIN.
#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcap/common.hpp"
#include "mcap/data.hpp"
#include "mcap/metrics.hpp"
#include "mcap/model.hpp"
#include "mcap/rng.hpp"
#include "mcap/text.hpp"
#include "mcap/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mcap;
using metrics::TokenList;

namespace {

std::string g_bin;   // CLI under test
fs::path g_work;     // scratch root

int run_cli(const std::string& args, const std::string& log = "/dev/null") {
  const std::string cmd = g_bin + " " + args + " >" + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return 127;
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("missing " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

// ---------------------------------------------------------------------- 1

bool criterion_grad_fidelity(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = run_cli("grad-check --dims small", (g_work / "gradcheck.log").string());
  const double secs = elapsed_s(t0);
  detail = "all fusion x extractor combos, rel err < 1e-4, " + fmt(secs, 2) + "s";
  if (rc != 0) detail = "grad-check exited " + std::to_string(rc);
  return rc == 0 && secs < 30.0;
}

// ---------------------------------------------------------------------- 2

model::ModelParams oracle_model(model::Fusion fusion, uint64_t seed) {
  model::ModelConfig cfg;
  cfg.fusion = fusion;
  cfg.extractor = model::Extractor::kFrozenFile;
  cfg.h_enc = cfg.h_dec = 5;
  cfg.d = 4;
  cfg.k = 3;
  cfg.vocab = 6;
  cfg.max_len = 3;
  cfg.dropout = 0.0;
  text::EmbeddingTable emb;
  emb.table = num::Matrix(6, 4);
  Rng rng(mix_seed(seed, 1));
  for (double& x : emb.table.v) x = rng.uniform(-1.0, 1.0);
  auto P = model::init_params(cfg, emb, mix_seed(seed, 2));
  for (num::ParamTensor* p : P.all())
    if (!p->frozen)
      for (double& x : p->value.v) x = rng.uniform(-0.8, 0.8);
  return P;
}

double oracle_walk(const model::ModelParams& P, const model::ClipContext& ctx,
                   const std::vector<int>& ids) {
  model::GenState st;
  model::init_state(P, st);
  double total = 0.0;
  for (size_t t = 1; t < ids.size(); ++t)
    total += model::gen_step(P, ctx, st, ids[t - 1])[ids[t]];
  return total;
}

void oracle_enumerate(const model::ModelParams& P, const model::ClipContext& ctx,
                      std::vector<int>& ids, std::vector<int>& best_ids, double& best_lp,
                      bool& have_best) {
  if (ids.back() == text::kEos || ids.size() == 5) {  // max_len 3 caps at 5 total
    const double lp = oracle_walk(P, ctx, ids);
    if (!have_best || lp > best_lp || (lp == best_lp && ids < best_ids)) {
      best_lp = lp;
      best_ids = ids;
      have_best = true;
    }
    return;
  }
  for (int tok = text::kEos; tok < 6; ++tok) {
    ids.push_back(tok);
    oracle_enumerate(P, ctx, ids, best_ids, best_lp, have_best);
    ids.pop_back();
  }
}

bool criterion_decoder_oracle(std::string& detail) {
  int exact = 0, greedy_exact = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto fusion = seed % 3 == 0   ? model::Fusion::kEarly
                        : seed % 3 == 1 ? model::Fusion::kLate
                                        : model::Fusion::kAttention;
    const auto P = oracle_model(fusion, seed);
    num::Matrix feats(2, 3);
    Rng rng(mix_seed(seed, 3));
    for (double& x : feats.v) x = rng.uniform(-1.0, 1.0);
    model::AudioInput in;
    in.features = &feats;
    const auto ctx = model::prepare_clip(P, in);

    std::vector<int> ids{text::kSos}, best_ids;
    double best_lp = 0.0;
    bool have = false;
    oracle_enumerate(P, ctx, ids, best_ids, best_lp, have);

    const auto beam = model::beam_decode(P, in, 256, 3);
    if (beam.best.ids == best_ids && beam.best.logprob == best_lp) ++exact;

    const auto g = model::greedy_decode(P, in, 3);
    const auto b1 = model::beam_decode(P, in, 1, 3);
    if (b1.best.ids == g.ids && b1.best.logprob == g.logprob) ++greedy_exact;
  }
  detail = "exhaustive beam == brute force " + std::to_string(exact) + "/20, beam(1) == greedy " +
           std::to_string(greedy_exact) + "/20";
  return exact == 20 && greedy_exact == 20;
}

// ---------------------------------------------------------------------- 3

namespace recount {

using Counts = std::map<std::string, long long>;

Counts grams(const TokenList& t, int n) {
  Counts c;
  for (size_t i = 0; i + n <= t.size(); ++i) {
    std::string k;
    for (int j = 0; j < n; ++j) {
      if (j) k += '\x1f';
      k += t[i + j];
    }
    ++c[k];
  }
  return c;
}

double bleu(const std::vector<TokenList>& cands, const std::vector<TokenList>& refs, int n_max) {
  long long clipped[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0}, rl = 0, cl = 0;
  for (size_t i = 0; i < cands.size(); ++i) {
    rl += (long long)refs[i].size();
    cl += (long long)cands[i].size();
    for (int n = 1; n <= n_max; ++n) {
      const Counts cg = grams(cands[i], n), rg = grams(refs[i], n);
      for (const auto& [g, c] : cg) {
        const auto it = rg.find(g);
        clipped[n - 1] += std::min(c, it == rg.end() ? 0LL : it->second);
        total[n - 1] += c;
      }
    }
  }
  if (cl == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    if (total[n - 1] == 0 || clipped[n - 1] == 0) return 0.0;
    log_sum += std::log((double)clipped[n - 1] / (double)total[n - 1]);
  }
  const double geo = std::exp(log_sum / n_max);
  const double bp = cl >= rl ? 1.0 : std::exp(1.0 - (double)rl / (double)cl);
  return bp * geo;
}

double rouge_l(const TokenList& cand, const TokenList& ref) {
  if (cand.empty()) return 0.0;
  const size_t nc = cand.size(), nr = ref.size();
  std::vector<std::vector<int>> dp(nc + 1, std::vector<int>(nr + 1, 0));
  for (size_t i = 1; i <= nc; ++i)
    for (size_t j = 1; j <= nr; ++j)
      dp[i][j] = cand[i - 1] == ref[j - 1] ? dp[i - 1][j - 1] + 1
                                           : std::max(dp[i - 1][j], dp[i][j - 1]);
  const int lcs = dp[nc][nr];
  if (lcs == 0) return 0.0;
  const double r = (double)lcs / (double)nr, p = (double)lcs / (double)nc;
  const double beta2 = 1.2 * 1.2;
  return (1.0 + beta2) * r * p / (r + beta2 * p);
}

double cider(const std::vector<TokenList>& cands, const std::vector<TokenList>& refs) {
  const double m = (double)refs.size();
  std::array<Counts, 4> df;
  for (const TokenList& ref : refs)
    for (int n = 1; n <= 4; ++n)
      for (const auto& [g, c] : grams(ref, n)) ++df[n - 1][g];
  const auto idf = [&](const Counts& dfn, const std::string& g) {
    const auto it = dfn.find(g);
    return std::log(m / (double)(it == dfn.end() ? 1 : std::max(it->second, 1LL)));
  };
  double score = 0.0;
  for (int n = 1; n <= 4; ++n) {
    double sum_n = 0.0;
    for (size_t i = 0; i < cands.size(); ++i) {
      const Counts cg = grams(cands[i], n), rg = grams(refs[i], n);
      double dot = 0.0, nc = 0.0, nr = 0.0;
      for (const auto& [g, c] : cg) {
        const double w = c * idf(df[n - 1], g);
        nc += w * w;
        const auto it = rg.find(g);
        if (it != rg.end()) dot += w * (it->second * idf(df[n - 1], g));
      }
      for (const auto& [g, c] : rg) {
        const double w = c * idf(df[n - 1], g);
        nr += w * w;
      }
      if (nc > 0.0 && nr > 0.0) sum_n += dot / (std::sqrt(nc) * std::sqrt(nr));
    }
    score += sum_n / (double)cands.size();
  }
  return 10.0 * (score / 4.0);
}

}  // namespace recount

bool criterion_metric_oracles(std::string& detail) {
  const std::vector<std::string> words{"kick", "snare", "hat", "tom", "ride"};
  Rng rng(20260817);
  std::vector<TokenList> cands(200), refs(200);
  for (int i = 0; i < 200; ++i) {
    const int cl = (int)rng.uniform_int(0, 12), rl = (int)rng.uniform_int(1, 12);
    for (int t = 0; t < cl; ++t) cands[i].push_back(words[rng.uniform_int(0, 4)]);
    for (int t = 0; t < rl; ++t) refs[i].push_back(words[rng.uniform_int(0, 4)]);
  }

  bool exact = true;
  for (int n = 1; n <= 4; ++n)
    exact = exact && metrics::bleu(cands, refs, n) == recount::bleu(cands, refs, n);
  for (int i = 0; i < 200; ++i)
    exact = exact && metrics::rouge_l(cands[i], refs[i]) == recount::rouge_l(cands[i], refs[i]);
  exact = exact &&
          metrics::cider(cands, refs, metrics::build_df(refs)) == recount::cider(cands, refs);

  const double b1 = metrics::bleu({text::tokenize("the the the the the the the")},
                                  {text::tokenize("the cat is on the mat")}, 1);
  const bool anchor_bleu = std::fabs(b1 - 2.0 / 7.0) < 1e-12;

  const double rl =
      metrics::rouge_l(text::tokenize("a b c d"), text::tokenize("a b c"));
  const bool anchor_rouge = std::fabs(rl - 0.8798076923076923) < 1e-4;

  const std::vector<TokenList> two{text::tokenize("alpha bravo charlie"),
                                   text::tokenize("delta echo foxtrot")};
  const double cd = metrics::cider(two, two, metrics::build_df(two));
  const bool anchor_cider = std::fabs(cd - 7.5) < 1e-6;

  detail = std::string("recount ") + (exact ? "exact" : "MISMATCH") + ", anchors 2/7=" +
           fmt(b1) + " rouge=" + fmt(rl) + " cider=" + fmt(cd, 6);
  return exact && anchor_bleu && anchor_rouge && anchor_cider;
}

// ------------------------------------------------------------------ 4/6/8

struct MemorizedRun {
  bool trained = false;
  double secs = 0.0;
  double final_acc = 0.0;
  int epochs = 0;
  int verbatim = -1, total = 0;
  double r_at_1 = -1.0;
  long long greedy_reps = -1, beam_reps = -1;
  std::string error;
};

MemorizedRun run_memorization() {
  MemorizedRun out;
  const fs::path corpus = g_work / "mem_corpus";
  const fs::path run = g_work / "mem_run";
  if (run_cli("gen-data --out " + corpus.string() + " --pairs 50 --seed 7 --noise-sigma 1.0") !=
      0) {
    out.error = "gen-data failed";
    return out;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const int rc = run_cli(
      "train --data " + corpus.string() + " --out " + run.string() +
          " --train-frac 1 --val-frac 0 --test-frac 0 --fusion attention --hidden 64"
          " --embed-dim 32 --dropout 0 --min-freq 1 --lr 1e-2 --epochs 300 --batch-size 8"
          " --stop-train-acc 0.995 --seed 7",
      (g_work / "mem_train.log").string());
  out.secs = elapsed_s(t0);
  if (rc != 0) {
    out.error = "train exited " + std::to_string(rc);
    return out;
  }
  out.trained = true;

  std::ifstream log(run / "log.jsonl");
  std::string line, last;
  while (std::getline(log, line))
    if (!line.empty()) {
      last = line;
      ++out.epochs;
    }
  out.final_acc = json::parse(last)["train_token_acc"].get<double>();

  const std::string ckpt = (run / "checkpoints" / "best").string();
  const std::string splits = (run / "splits.json").string();
  if (run_cli("caption --ckpt " + ckpt + " --data " + corpus.string() + " --splits " + splits +
              " --split train --decode greedy --out " + (g_work / "mem_greedy").string()) != 0) {
    out.error = "caption failed";
    return out;
  }

  std::map<std::string, TokenList> want;
  for (const auto& p : data::read_manifest((corpus / "manifest.jsonl").string(), false))
    want[p.id] = text::tokenize(p.caption);
  out.total = (int)want.size();
  std::vector<TokenList> greedy_caps;
  out.verbatim = 0;
  for (const auto& [id, cap] : metrics::read_caption_file((g_work / "mem_greedy" /
                                                           "captions.tsv").string())) {
    greedy_caps.push_back(text::tokenize(cap));
    if (want.count(id) && text::tokenize(cap) == want[id]) ++out.verbatim;
  }

  if (run_cli("retrieve --ckpt " + ckpt + " --data " + corpus.string() + " --splits " + splits +
              " --split train --out " + (g_work / "mem_ret").string()) != 0) {
    out.error = "retrieve failed";
    return out;
  }
  std::ifstream rj(g_work / "mem_ret" / "retrieval.json");
  out.r_at_1 = json::parse(rj)["r_at_1"].get<double>();

  if (run_cli("caption --ckpt " + ckpt + " --data " + corpus.string() + " --splits " + splits +
              " --split train --decode beam --beam-size 3 --out " +
              (g_work / "mem_beam").string()) != 0) {
    out.error = "beam caption failed";
    return out;
  }
  std::vector<TokenList> beam_caps;
  for (const auto& [id, cap] :
       metrics::read_caption_file((g_work / "mem_beam" / "captions.tsv").string()))
    beam_caps.push_back(text::tokenize(cap));
  out.greedy_reps = metrics::caption_stats(greedy_caps).repetitions;
  out.beam_reps = metrics::caption_stats(beam_caps).repetitions;
  return out;
}

bool criterion_memorization(const MemorizedRun& mem, std::string& detail) {
  if (!mem.error.empty()) {
    detail = mem.error;
    return false;
  }
  detail = "token acc " + fmt(mem.final_acc) + " after " + std::to_string(mem.epochs) +
           " epochs in " + fmt(mem.secs, 1) + "s, verbatim " + std::to_string(mem.verbatim) +
           "/" + std::to_string(mem.total);
  return mem.final_acc >= 0.95 && mem.epochs <= 300 && mem.secs < 600.0 && mem.total == 50 &&
         mem.verbatim >= 45;
}

// ---------------------------------------------------------------------- 5

bool criterion_ablation(std::string& detail) {
  const fs::path corpus = g_work / "abl_corpus";
  if (run_cli("gen-data --out " + corpus.string() + " --pairs 250 --seed 100") != 0) {
    detail = "gen-data failed";
    return false;
  }
  const std::string common =
      " --train-frac 0.8 --val-frac 0.2 --test-frac 0 --fusion attention --hidden 32"
      " --embed-dim 32 --min-freq 1 --lr 3e-3 --epochs 20 --batch-size 16 --patience 50";
  const auto best_val = [&](const fs::path& run) {
    double best = std::numeric_limits<double>::infinity();
    std::ifstream is(run / "log.jsonl");
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) best = std::min(best, json::parse(line)["val_loss"].get<double>());
    return best;
  };

  int wins = 0;
  std::string gaps;
  for (int seed = 0; seed < 5; ++seed) {
    const fs::path fdir = g_work / ("abl_frozen_" + std::to_string(seed));
    const fs::path tdir = g_work / ("abl_trainable_" + std::to_string(seed));
    if (run_cli("train --data " + corpus.string() + " --out " + fdir.string() +
                " --pretrained frozen-file" + common + " --seed " + std::to_string(seed)) != 0 ||
        run_cli("train --data " + corpus.string() + " --out " + tdir.string() +
                " --pretrained trainable --k 8" + common + " --seed " +
                std::to_string(seed)) != 0) {
      detail = "a training run failed at seed " + std::to_string(seed);
      return false;
    }
    const double f = best_val(fdir), t = best_val(tdir);
    if (f < t) ++wins;
    gaps += (gaps.empty() ? "" : " ") + fmt(t - f, 3);
  }
  detail = "frozen beats trainable in " + std::to_string(wins) + "/5 seeds (val-loss gaps " +
           gaps + ")";
  return wins >= 4;
}

// ---------------------------------------------------------------------- 6

bool criterion_retrieval(const MemorizedRun& mem, std::string& detail) {
  const auto anchor = metrics::retrieval_metrics({1, 2, 5, 40});
  const bool anchor_ok =
      anchor.r_at_1 == 25.0 && anchor.r_at_5 == 75.0 && anchor.median_rank == 3.5;
  if (!mem.error.empty()) {
    detail = mem.error;
    return false;
  }
  detail = "R@1 " + fmt(mem.r_at_1, 1) + "% over 50 memorized clips; ranks {1,2,5,40} -> R@1 " +
           fmt(anchor.r_at_1, 0) + " R@5 " + fmt(anchor.r_at_5, 0) + " median " +
           fmt(anchor.median_rank, 1);
  return mem.r_at_1 >= 90.0 && anchor_ok;
}

// ---------------------------------------------------------------------- 7

bool criterion_attention(std::string& detail) {
  model::ModelConfig cfg;
  cfg.fusion = model::Fusion::kAttention;
  cfg.extractor = model::Extractor::kFrozenFile;
  cfg.h_enc = cfg.h_dec = 6;
  cfg.d = 5;
  cfg.k = 4;
  cfg.vocab = 9;
  cfg.max_len = 6;
  cfg.dropout = 0.0;
  text::EmbeddingTable emb;
  emb.table = num::Matrix(9, 5);
  Rng rng(515);
  for (double& x : emb.table.v) x = rng.uniform(-0.5, 0.5);
  const auto P = model::init_params(cfg, emb, 29);

  double worst_sum = 0.0, worst_uniform = 0.0;
  bool nonneg = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int L = 2 + (int)rng.uniform_int(0, 4);
    num::Matrix feats(L, 4);
    for (double& x : feats.v) x = rng.uniform(-2.0, 2.0);
    model::AudioInput in;
    in.features = &feats;
    const auto ctx = model::prepare_clip(P, in);
    model::GenState st;
    model::init_state(P, st);
    int prev = text::kSos;
    for (int step = 0; step < 3; ++step) {
      num::Vec beta;
      const num::Vec lp = model::gen_step(P, ctx, st, prev, &beta);
      double sum = 0.0;
      for (double b : beta) {
        sum += b;
        nonneg = nonneg && b >= 0.0;
      }
      worst_sum = std::max(worst_sum, std::fabs(sum - 1.0));
      int best = 0;
      for (size_t j = 1; j < lp.size(); ++j)
        if (lp[j] > lp[best]) best = (int)j;
      prev = best;
    }

    // Same trial, all chunks identical: weights must be uniform.
    num::Matrix same(L, 4);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < 4; ++j) same.at(i, j) = feats.at(0, j);
    model::AudioInput in2;
    in2.features = &same;
    const auto ctx2 = model::prepare_clip(P, in2);
    model::GenState st2;
    model::init_state(P, st2);
    num::Vec beta;
    model::gen_step(P, ctx2, st2, text::kSos, &beta);
    for (double b : beta) worst_uniform = std::max(worst_uniform, std::fabs(b - 1.0 / L));
  }

  // Single chunk: the weight is exactly 1, not merely close.
  num::Matrix one(1, 4);
  for (double& x : one.v) x = rng.uniform(-1.0, 1.0);
  model::AudioInput in;
  in.features = &one;
  const auto ctx = model::prepare_clip(P, in);
  model::GenState st;
  model::init_state(P, st);
  num::Vec beta;
  model::gen_step(P, ctx, st, text::kSos, &beta);
  const bool single_exact = beta.size() == 1 && beta[0] == 1.0;

  detail = "max |row sum - 1| " + fmt(worst_sum, 12) + ", max uniform dev " +
           fmt(worst_uniform, 12) + ", L=1 weight " + (single_exact ? "== 1" : "!= 1");
  return worst_sum < 1e-9 && worst_uniform < 1e-9 && nonneg && single_exact;
}

// ---------------------------------------------------------------------- 8

bool criterion_caption_stats(const MemorizedRun& mem, std::string& detail) {
  const auto a = metrics::caption_stats({text::tokenize("upbeat acoustic guitar guitar")});
  const auto b = metrics::caption_stats({text::tokenize("and strings and strings")});
  const bool anchors = a.repetitions == 1 && b.repetitions == 1;

  std::string direction = "beam-vs-greedy direction unavailable";
  if (mem.error.empty() && mem.greedy_reps >= 0) {
    direction = "beam(3) reps " + std::to_string(mem.beam_reps) + " vs greedy " +
                std::to_string(mem.greedy_reps) +
                (mem.beam_reps <= mem.greedy_reps ? " (non-increasing)" : " (increased)");
  }
  detail = "printed examples -> " + std::to_string(a.repetitions) + " and " +
           std::to_string(b.repetitions) + " repetitions; " + direction +
           " [direction not gated]";
  return anchors;
}

// ---------------------------------------------------------------------- 9

bool criterion_determinism(std::string& detail) {
  const auto pipeline = [&](const std::string& tag) -> bool {
    const fs::path corpus = g_work / ("det_corpus_" + tag);
    const fs::path run = g_work / ("det_run_" + tag);
    const fs::path cap = g_work / ("det_cap_" + tag);
    const fs::path ev = g_work / ("det_eval_" + tag);
    return run_cli("gen-data --out " + corpus.string() + " --pairs 20 --seed 11") == 0 &&
           run_cli("train --data " + corpus.string() + " --out " + run.string() +
                   " --fusion attention --hidden 8 --embed-dim 6 --epochs 3 --batch-size 4"
                   " --min-freq 1 --lr 1e-3 --seed 11") == 0 &&
           run_cli("caption --ckpt " + (run / "checkpoints" / "best").string() + " --data " +
                   corpus.string() + " --splits " + (run / "splits.json").string() +
                   " --split test --out " + cap.string()) == 0 &&
           run_cli("eval --data " + corpus.string() + " --candidates " +
                   (cap / "captions.tsv").string() + " --out " + ev.string()) == 0;
  };
  if (!pipeline("a") || !pipeline("b")) {
    detail = "a pipeline run failed";
    return false;
  }

  const std::vector<std::pair<std::string, std::string>> files{
      {"det_corpus_", "manifest.jsonl"},
      {"det_run_", "splits.json"},
      {"det_run_", "log.jsonl"},
      {"det_run_", "checkpoints/best/params.bin"},
      {"det_run_", "checkpoints/best/manifest.json"},
      {"det_run_", "checkpoints/best/vocab.txt"},
      {"det_cap_", "captions.tsv"},
      {"det_eval_", "report.tsv"},
      {"det_eval_", "report.json"},
  };
  int identical = 0;
  std::string first_diff;
  for (const auto& [prefix, rel] : files) {
    if (slurp(g_work / (prefix + std::string("a")) / rel) ==
        slurp(g_work / (prefix + std::string("b")) / rel))
      ++identical;
    else if (first_diff.empty())
      first_diff = rel;
  }
  detail = std::to_string(identical) + "/" + std::to_string(files.size()) +
           " artifacts byte-identical across two seeded runs";
  if (!first_diff.empty()) detail += " (first diff: " + first_diff + ")";
  return identical == (int)files.size();
}

}  // namespace

int main() {
  const char* bin = std::getenv("MCAP_BIN");
  if (!bin) {
    std::cerr << "MCAP_BIN must point at the CLI binary\n";
    return 64;
  }
  g_bin = bin;
  g_work = fs::temp_directory_path() / "mcap_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  int failures = 0;
  const auto report = [&](int n, const char* name, std::function<bool(std::string&)> fn) {
    std::string detail;
    bool ok = false;
    try {
      ok = fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::cout << "criterion " << n << " (" << name << "): " << (ok ? "PASS" : "FAIL") << " — "
              << detail << "\n";
    std::cout.flush();
    if (!ok) ++failures;
  };

  report(1, "gradient fidelity", criterion_grad_fidelity);
  report(2, "decoder oracle", criterion_decoder_oracle);
  report(3, "metric oracles", criterion_metric_oracles);

  MemorizedRun mem;
  try {
    mem = run_memorization();
  } catch (const std::exception& e) {
    mem.error = e.what();
  }
  report(4, "memorization", [&](std::string& d) { return criterion_memorization(mem, d); });
  report(5, "pretraining ablation", criterion_ablation);
  report(6, "retrieval sanity", [&](std::string& d) { return criterion_retrieval(mem, d); });
  report(7, "attention invariants", criterion_attention);
  report(8, "caption statistics", [&](std::string& d) { return criterion_caption_stats(mem, d); });
  report(9, "determinism", criterion_determinism);

  return failures;
}
