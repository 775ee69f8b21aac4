#pragma once

#include <map>
#include <string>
#include <vector>

#include "mcap/model.hpp"
#include "mcap/train.hpp"

namespace mcap::metrics {

using TokenList = std::vector<std::string>;

// Ordered n-gram counter (sorted iteration keeps float accumulation
// order fixed).
using NGramCounts = std::map<std::vector<std::string>, int>;

NGramCounts count_ngrams(const TokenList& tokens, int n);

// Document frequencies over the reference corpus, for n = 1..4.
struct CorpusDf {
  std::array<NGramCounts, 4> df;
  int m = 0;  // reference corpus size
};
CorpusDf build_df(const std::vector<TokenList>& references);

// Corpus-level BLEU: clipped n-gram counts pooled over all pairs, geometric
// mean of p_1..p_{n_max}, brevity penalty exp(min(0, 1 - r/c)). Any p_n = 0
// (or an empty candidate corpus) gives 0.
double bleu(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
            int n_max);

// LCS F-score with beta = 1.2: F = (1+b^2)RP / (R + b^2 P); 0 when LCS = 0.
double rouge_l(const TokenList& candidate, const TokenList& reference);

// Original CIDEr: per n, cosine between tf-idf n-gram vectors with
// idf = log(M / max(df, 1)); zero vectors score 0. Result is
// 10 * mean over n of the corpus mean. A single-reference corpus is
// degenerate (idf = 0 everywhere) and scores 0 with a warning on stderr.
double cider(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
             const CorpusDf& df);

struct CaptionStats {
  long long total_tokens = 0;
  long long unk_tokens = 0;
  long long repetitions = 0;
  double unk_rate = 0.0;
  double repetition_rate = 0.0;
};

// A repetition is a position whose 1- or 2-gram equals the immediately
// preceding adjacent one ("guitar guitar", "and strings and strings").
CaptionStats caption_stats(const std::vector<TokenList>& captions);

struct RetrievalMetrics {
  double r_at_1 = 0.0, r_at_5 = 0.0, r_at_10 = 0.0;  // percent
  double median_rank = 0.0;
};

// Recall@K (percent of 1-based ranks <= K) and median rank (mean of the
// middle two for even counts).
RetrievalMetrics retrieval_metrics(const std::vector<int>& ranks);

struct RetrievalQuery {
  std::string id;         // reporting label
  std::vector<int> ids;   // encoded caption, <sos>..<eos>
  std::string target_id;  // ground-truth clip id in the pool
};

struct RetrievalResult {
  std::vector<int> ranks;  // per query, 1-based
  num::Matrix scores;      // queries x candidates log-probabilities
  RetrievalMetrics metrics;
};

// Scores every (query, candidate) pair with the model's sequence
// log-probability; candidates are ranked per query by score descending with
// ties broken by candidate id ascending.
RetrievalResult retrieval_eval(const model::ModelParams& P,
                               const std::vector<RetrievalQuery>& queries,
                               const std::vector<train::TrainItem>& pool);

struct MetricReport {
  double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;  // [0,1]
  double rouge_l = 0;                                 // [0,1], corpus mean
  double cider = 0;                                   // [0,10]
  CaptionStats stats;
  bool has_retrieval = false;
  RetrievalMetrics retrieval;
};

MetricReport evaluate_captions(const std::vector<TokenList>& candidates,
                               const std::vector<TokenList>& references);

// name<TAB>value lines with a header documenting scales; METEOR/SPICE/SPIDEr
// need external resources and are reported n/a.
void write_report_tsv(const std::string& path, const MetricReport& report);
void write_report_json(const std::string& path, const MetricReport& report);

// Caption files: one "<id>\t<caption>" line per clip.
std::vector<std::pair<std::string, std::string>> read_caption_file(const std::string& path);
void write_caption_file(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& entries);

}  // namespace mcap::metrics
