#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcap/matrix.hpp"
#include "mcap/rng.hpp"

namespace mcap::text {

// Fixed special-token ids.
constexpr int kPad = 0;
constexpr int kSos = 1;
constexpr int kEos = 2;
constexpr int kUnk = 3;
constexpr int kNumSpecials = 4;

extern const char* const kPadTok;
extern const char* const kSosTok;
extern const char* const kEosTok;
extern const char* const kUnkTok;

// Lowercase, split on whitespace, strip leading/trailing punctuation per
// token, drop empties. Internal punctuation (hyphens etc.) is kept.
std::vector<std::string> tokenize(const std::string& s);

class Vocabulary {
 public:
  Vocabulary() = default;

  // Regular tokens keep frequency >= min_freq; ids are assigned by
  // (frequency desc, token asc) after the four specials.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus, int min_freq);

  // From an explicit id-ordered token list (checkpoint loading). The first
  // four entries must be the special tokens.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// <sos> + ids + <eos>, unknowns mapped to <unk>, content truncated to max_len.
std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                        int max_len);

// Inverse of encode up to framing: drops <pad>/<sos>/<eos>, keeps <unk>.
std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab);

// Frozen word-embedding table, rows indexed by token id.
struct EmbeddingTable {
  num::Matrix table;  // V x d
  bool frozen = true;

  int dim() const { return table.cols; }
  const double* row(int id) const { return table.row(id); }
};

// Text format: one entry per line, token then exactly d decimals. Tokens
// missing from the file (the specials included) get seeded rows uniform in
// [-0.1, 0.1], drawn in id order.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, int d,
                               uint64_t seed);

// All-random table (same as loading an empty file).
EmbeddingTable random_embeddings(const Vocabulary& vocab, int d, uint64_t seed);

}  // namespace mcap::text
