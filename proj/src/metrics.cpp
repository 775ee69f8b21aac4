#include "mcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "mcap/common.hpp"
#include "mcap/text.hpp"

using json = nlohmann::json;

namespace mcap::metrics {

NGramCounts count_ngrams(const TokenList& tokens, int n) {
  NGramCounts counts;
  if (n < 1) throw Error("n-gram order must be positive");
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::vector<std::string> gram(tokens.begin() + i, tokens.begin() + i + n);
    ++counts[std::move(gram)];
  }
  return counts;
}

CorpusDf build_df(const std::vector<TokenList>& references) {
  CorpusDf out;
  out.m = static_cast<int>(references.size());
  for (const TokenList& ref : references) {
    for (int n = 1; n <= 4; ++n) {
      const NGramCounts grams = count_ngrams(ref, n);
      for (const auto& [g, c] : grams) ++out.df[n - 1][g];
    }
  }
  return out;
}

double bleu(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
            int n_max) {
  if (n_max < 1 || n_max > 4) throw Error("BLEU order must lie in 1..4");
  if (candidates.size() != references.size())
    throw Error("candidate and reference counts differ");
  if (candidates.empty()) throw Error("BLEU over an empty corpus");
  for (const TokenList& ref : references)
    if (ref.empty()) throw Error("empty reference caption");

  long long clipped[4] = {0, 0, 0, 0};
  long long total[4] = {0, 0, 0, 0};
  long long ref_len = 0, cand_len = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    ref_len += static_cast<long long>(references[i].size());
    cand_len += static_cast<long long>(candidates[i].size());
    for (int n = 1; n <= n_max; ++n) {
      const NGramCounts cg = count_ngrams(candidates[i], n);
      const NGramCounts rg = count_ngrams(references[i], n);
      for (const auto& [g, c] : cg) {
        const auto it = rg.find(g);
        clipped[n - 1] += std::min(c, it == rg.end() ? 0 : it->second);
        total[n - 1] += c;
      }
    }
  }

  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    if (total[n - 1] == 0 || clipped[n - 1] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(clipped[n - 1]) / static_cast<double>(total[n - 1]));
  }
  const double geo = std::exp(log_sum / n_max);
  const double bp =
      cand_len >= ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * geo;
}

double rouge_l(const TokenList& candidate, const TokenList& reference) {
  if (reference.empty()) throw Error("empty reference caption");
  if (candidate.empty()) return 0.0;
  const size_t nc = candidate.size(), nr = reference.size();
  std::vector<int> prev(nr + 1, 0), cur(nr + 1, 0);
  for (size_t i = 1; i <= nc; ++i) {
    for (size_t j = 1; j <= nr; ++j) {
      if (candidate[i - 1] == reference[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const int lcs = prev[nr];
  if (lcs == 0) return 0.0;
  const double r = static_cast<double>(lcs) / static_cast<double>(nr);
  const double p = static_cast<double>(lcs) / static_cast<double>(nc);
  const double beta2 = 1.2 * 1.2;
  return (1.0 + beta2) * r * p / (r + beta2 * p);
}

double cider(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
             const CorpusDf& df) {
  if (candidates.size() != references.size())
    throw Error("candidate and reference counts differ");
  if (df.m == 0) throw Error("CIDEr needs a non-empty reference corpus");
  if (candidates.empty()) throw Error("CIDEr over an empty corpus");
  if (df.m < 2)
    std::cerr << "warning: single-reference corpus makes every idf zero; CIDEr degenerates to 0\n";

  const double m = static_cast<double>(df.m);
  const auto idf = [&](const NGramCounts& dfn, const std::vector<std::string>& g) {
    const auto it = dfn.find(g);
    const int d = it == dfn.end() ? 1 : std::max(it->second, 1);
    return std::log(m / d);
  };

  double score = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const NGramCounts& dfn = df.df[n - 1];
    double sum_n = 0.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
      const NGramCounts cg = count_ngrams(candidates[i], n);
      const NGramCounts rg = count_ngrams(references[i], n);
      double dot = 0.0, norm_c = 0.0, norm_r = 0.0;
      for (const auto& [g, c] : cg) {
        const double w = c * idf(dfn, g);
        norm_c += w * w;
        const auto it = rg.find(g);
        if (it != rg.end()) dot += w * (it->second * idf(dfn, g));
      }
      for (const auto& [g, c] : rg) {
        const double w = c * idf(dfn, g);
        norm_r += w * w;
      }
      if (norm_c > 0.0 && norm_r > 0.0)
        sum_n += dot / (std::sqrt(norm_c) * std::sqrt(norm_r));
    }
    score += sum_n / static_cast<double>(candidates.size());
  }
  return 10.0 * (score / 4.0);
}

CaptionStats caption_stats(const std::vector<TokenList>& captions) {
  CaptionStats s;
  for (const TokenList& c : captions) {
    const size_t n = c.size();
    s.total_tokens += static_cast<long long>(n);
    for (size_t t = 0; t < n; ++t) {
      if (c[t] == text::kUnkTok) ++s.unk_tokens;
      const bool uni = t >= 1 && c[t] == c[t - 1];
      const bool bi = t >= 3 && c[t] == c[t - 2] && c[t - 1] == c[t - 3];
      if (uni || bi) ++s.repetitions;
    }
  }
  if (s.total_tokens > 0) {
    s.unk_rate = static_cast<double>(s.unk_tokens) / static_cast<double>(s.total_tokens);
    s.repetition_rate =
        static_cast<double>(s.repetitions) / static_cast<double>(s.total_tokens);
  }
  return s;
}

RetrievalMetrics retrieval_metrics(const std::vector<int>& ranks) {
  if (ranks.empty()) throw Error("no retrieval ranks");
  const double q = static_cast<double>(ranks.size());
  long long le1 = 0, le5 = 0, le10 = 0;
  for (int r : ranks) {
    if (r < 1) throw Error("ranks are 1-based");
    le1 += r <= 1;
    le5 += r <= 5;
    le10 += r <= 10;
  }
  std::vector<int> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  RetrievalMetrics m;
  m.r_at_1 = 100.0 * le1 / q;
  m.r_at_5 = 100.0 * le5 / q;
  m.r_at_10 = 100.0 * le10 / q;
  m.median_rank = n % 2 ? sorted[n / 2]
                        : (static_cast<double>(sorted[n / 2 - 1]) + sorted[n / 2]) / 2.0;
  return m;
}

RetrievalResult retrieval_eval(const model::ModelParams& P,
                               const std::vector<RetrievalQuery>& queries,
                               const std::vector<train::TrainItem>& pool) {
  if (queries.empty()) throw Error("no retrieval queries");
  if (pool.empty()) throw Error("empty candidate pool");
  const int q_n = static_cast<int>(queries.size());
  const int c_n = static_cast<int>(pool.size());

  std::vector<int> target_idx(q_n, -1);
  for (int q = 0; q < q_n; ++q) {
    for (int c = 0; c < c_n; ++c)
      if (pool[c].id == queries[q].target_id) {
        target_idx[q] = c;
        break;
      }
    if (target_idx[q] < 0)
      throw Error("query " + queries[q].id + ": ground truth " + queries[q].target_id +
                  " is not in the pool");
  }

  // Per-candidate contexts are reused across every query.
  std::vector<model::ClipContext> ctx(c_n);
  std::vector<std::string> errs(c_n);
  bool failed = false;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < c_n; ++c) {
    try {
      ctx[c] = model::prepare_clip(P, train::item_input(pool[c], P.cfg));
    } catch (const std::exception& e) {
      errs[c] = e.what();
      failed = true;
    }
  }
  for (int c = 0; c < c_n; ++c)
    if (!errs[c].empty()) throw NumericError("candidate " + pool[c].id + ": " + errs[c]);
  (void)failed;

  RetrievalResult out;
  out.scores = num::Matrix(q_n, c_n);
#pragma omp parallel for schedule(static) collapse(2)
  for (int q = 0; q < q_n; ++q) {
    for (int c = 0; c < c_n; ++c) {
      try {
        out.scores.at(q, c) = model::sequence_logprob(P, ctx[c], queries[q].ids);
      } catch (const std::exception& e) {
#pragma omp critical
        errs[c] = e.what();
      }
    }
  }
  for (int c = 0; c < c_n; ++c)
    if (!errs[c].empty()) throw NumericError("candidate " + pool[c].id + ": " + errs[c]);
  for (size_t i = 0; i < out.scores.v.size(); ++i)
    if (!std::isfinite(out.scores.v[i]))
      throw NumericError("non-finite retrieval score for candidate " +
                         pool[i % c_n].id);

  out.ranks.resize(q_n);
  for (int q = 0; q < q_n; ++q) {
    const int g = target_idx[q];
    const double gt = out.scores.at(q, g);
    int better = 0;
    for (int c = 0; c < c_n; ++c) {
      if (c == g) continue;
      const double s = out.scores.at(q, c);
      if (s > gt || (s == gt && pool[c].id < pool[g].id)) ++better;
    }
    out.ranks[q] = 1 + better;
  }
  out.metrics = retrieval_metrics(out.ranks);
  return out;
}

MetricReport evaluate_captions(const std::vector<TokenList>& candidates,
                               const std::vector<TokenList>& references) {
  MetricReport r;
  r.bleu1 = bleu(candidates, references, 1);
  r.bleu2 = bleu(candidates, references, 2);
  r.bleu3 = bleu(candidates, references, 3);
  r.bleu4 = bleu(candidates, references, 4);
  double rl = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) rl += rouge_l(candidates[i], references[i]);
  r.rouge_l = rl / static_cast<double>(candidates.size());
  r.cider = cider(candidates, references, build_df(references));
  r.stats = caption_stats(candidates);
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_report_tsv(const std::string& path, const MetricReport& r) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << "# BLEU and ROUGE-L lie in [0,1]; CIDEr in [0,10] (no x100 scaling)\n";
  os << "# METEOR/SPICE/SPIDEr need external linguistic resources and are n/a\n";
  os << "BLEU_1\t" << fmt(r.bleu1) << "\n";
  os << "BLEU_2\t" << fmt(r.bleu2) << "\n";
  os << "BLEU_3\t" << fmt(r.bleu3) << "\n";
  os << "BLEU_4\t" << fmt(r.bleu4) << "\n";
  os << "ROUGE_L\t" << fmt(r.rouge_l) << "\n";
  os << "CIDEr\t" << fmt(r.cider) << "\n";
  os << "METEOR\tn/a\n";
  os << "SPICE\tn/a\n";
  os << "SPIDEr\tn/a\n";
  os << "unk_rate\t" << fmt(r.stats.unk_rate) << "\n";
  os << "repetitions\t" << r.stats.repetitions << "\n";
  os << "repetition_rate\t" << fmt(r.stats.repetition_rate) << "\n";
  if (r.has_retrieval) {
    os << "R@1\t" << fmt(r.retrieval.r_at_1) << "\n";
    os << "R@5\t" << fmt(r.retrieval.r_at_5) << "\n";
    os << "R@10\t" << fmt(r.retrieval.r_at_10) << "\n";
    os << "median_rank\t" << fmt(r.retrieval.median_rank) << "\n";
  }
  if (!os) throw IoError("write failed for " + path);
}

void write_report_json(const std::string& path, const MetricReport& r) {
  json j;
  j["scales"] = {{"bleu", "[0,1]"}, {"rouge_l", "[0,1]"}, {"cider", "[0,10]"}};
  j["bleu_1"] = r.bleu1;
  j["bleu_2"] = r.bleu2;
  j["bleu_3"] = r.bleu3;
  j["bleu_4"] = r.bleu4;
  j["rouge_l"] = r.rouge_l;
  j["cider"] = r.cider;
  j["meteor"] = nullptr;
  j["spice"] = nullptr;
  j["spider"] = nullptr;
  j["unk_rate"] = r.stats.unk_rate;
  j["repetitions"] = r.stats.repetitions;
  j["repetition_rate"] = r.stats.repetition_rate;
  if (r.has_retrieval) {
    j["retrieval"] = {{"r_at_1", r.retrieval.r_at_1},
                      {"r_at_5", r.retrieval.r_at_5},
                      {"r_at_10", r.retrieval.r_at_10},
                      {"median_rank", r.retrieval.median_rank}};
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed for " + path);
}

std::vector<std::pair<std::string, std::string>> read_caption_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected id<TAB>caption");
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

void write_caption_file(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  for (const auto& [id, caption] : entries) os << id << "\t" << caption << "\n";
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace mcap::metrics
