#include "mcap/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace mcap::text {

const char* const kPadTok = "<pad>";
const char* const kSosTok = "<sos>";
const char* const kEosTok = "<eos>";
const char* const kUnkTok = "<unk>";

namespace {
bool is_special_literal(const std::string& t) {
  return t == kPadTok || t == kSosTok || t == kEosTok || t == kUnkTok;
}
}  // namespace

std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string raw;
  while (iss >> raw) {
    std::string tok;
    tok.reserve(raw.size());
    for (char ch : raw) tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    if (is_special_literal(tok)) {  // keep "<unk>" etc. intact through a re-tokenize
      out.push_back(tok);
      continue;
    }
    size_t begin = 0, end = tok.size();
    while (begin < end && std::ispunct(static_cast<unsigned char>(tok[begin]))) ++begin;
    while (end > begin && std::ispunct(static_cast<unsigned char>(tok[end - 1]))) --end;
    if (end > begin) out.push_back(tok.substr(begin, end - begin));
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus, int min_freq) {
  if (min_freq < 1) throw Error("build_vocab: min_freq must be >= 1");
  if (corpus.empty()) throw Error("build_vocab: empty corpus");

  std::map<std::string, long long> freq;
  for (const auto& tokens : corpus)
    for (const auto& t : tokens)
      if (!is_special_literal(t)) ++freq[t];

  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [tok, n] : freq)
    if (n >= min_freq) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens = {kPadTok, kSosTok, kEosTok, kUnkTok};
  for (const auto& [tok, n] : kept) tokens.push_back(tok);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumSpecials || tokens[0] != kPadTok || tokens[1] != kSosTok ||
      tokens[2] != kEosTok || tokens[3] != kUnkTok)
    throw ParseError("vocabulary: first four tokens must be the specials");
  Vocabulary v;
  v.id_to_token_ = std::move(tokens);
  for (size_t i = 0; i < v.id_to_token_.size(); ++i) {
    auto [it, inserted] = v.token_to_id_.emplace(v.id_to_token_[i], static_cast<int>(i));
    if (!inserted) throw ParseError("vocabulary: duplicate token '" + v.id_to_token_[i] + "'");
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("vocabulary: id out of range: " + std::to_string(id));
  return id_to_token_[id];
}

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                        int max_len) {
  if (max_len < 1) throw Error("encode: max_len must be >= 1");
  std::vector<int> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(kSos);
  const size_t keep = std::min(tokens.size(), static_cast<size_t>(max_len));
  for (size_t i = 0; i < keep; ++i) ids.push_back(vocab.id(tokens[i]));
  ids.push_back(kEos);
  return ids;
}

std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == kPad || id == kSos || id == kEos) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, int d,
                               uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("load_embeddings: cannot open " + path.string());

  std::unordered_map<std::string, num::Vec> rows;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream iss(line);
    std::string tok;
    iss >> tok;
    num::Vec values;
    values.reserve(d);
    double x;
    while (iss >> x) values.push_back(x);
    if (!iss.eof() || static_cast<int>(values.size()) != d)
      throw ParseError("load_embeddings: line " + std::to_string(line_no) + ": expected " +
                       std::to_string(d + 1) + " fields");
    if (vocab.contains(tok)) rows[tok] = std::move(values);
  }

  EmbeddingTable table;
  table.table = num::Matrix(vocab.size(), d);
  Rng rng(seed);
  for (int id = 0; id < vocab.size(); ++id) {
    auto it = rows.find(vocab.token(id));
    if (it != rows.end()) {
      std::copy(it->second.begin(), it->second.end(), table.table.row(id));
    } else {
      for (int j = 0; j < d; ++j) table.table.at(id, j) = rng.uniform(-0.1, 0.1);
    }
  }
  return table;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, int d, uint64_t seed) {
  EmbeddingTable table;
  table.table = num::Matrix(vocab.size(), d);
  Rng rng(seed);
  for (int id = 0; id < vocab.size(); ++id)
    for (int j = 0; j < d; ++j) table.table.at(id, j) = rng.uniform(-0.1, 0.1);
  return table;
}

}  // namespace mcap::text
