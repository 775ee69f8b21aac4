#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mcap::data {

// One audio-caption pair. Either path may be empty, but not both; paths in a
// loaded manifest are resolved relative to the manifest's directory.
struct Pair {
  std::string id;
  std::string frames_path;    // raw frame matrix ("MCA1")
  std::string features_path;  // precomputed chunk features ("MCF1")
  std::string caption;
  double duration = 0.0;  // seconds
  int klass = -1;         // synthetic class label; in-memory only, never serialized
};

struct RejectEntry {
  std::string id;
  std::string rule;  // "duration" | "token_count" | "duplicate_caption"
};

struct FilterResult {
  std::vector<Pair> kept;
  std::vector<RejectEntry> rejected;
};

// Keeps pairs with 30 <= duration <= 360 s, 3 <= caption tokens <= 22, and a
// caption string not seen earlier in the list (first occurrence wins).
FilterResult filter_pairs(const std::vector<Pair>& pairs);

struct SplitSpec {
  double train = 0.6, val = 0.2, test = 0.2;
  uint64_t seed = 0;
};

struct Splits {
  std::vector<std::string> train, val, test;
};

// Seeded shuffle, then contiguous slices. Val/test sizes are floored;
// the remainder goes to train. Fewer than 3 pairs is an error.
Splits split(const std::vector<Pair>& pairs, const SplitSpec& spec);

struct SynthConfig {
  int classes = 6;  // 2..15 (word banks hold 15 disjoint 4-word slices)
  int pairs = 60;
  int feature_dim = 8;  // F; frozen features reuse this as k
  double frame_rate = 10.0;
  double min_duration = 30.0, max_duration = 36.0;
  double chunk_seconds = 3.0;
  double noise_sigma = 0.1;
  uint64_t seed = 0;
  std::string out_dir;
};

struct SynthResult {
  std::vector<Pair> pairs;  // klass populated
  std::string manifest_path;
};

// Writes out_dir/{manifest.jsonl, frames/<id>.mca1, features/<id>.mcf1}.
// Frames follow a per-class base + sinusoid pattern plus Gaussian noise;
// feature files hold per-chunk frame means. Captions are class-specific
// mood/instrument/descriptor templates, deduplicated. Fully reproducible
// from the seed.
SynthResult generate_synthetic(const SynthConfig& cfg);

// Manifest: one JSON record per line with id, caption, duration_seconds,
// and at least one of frames / features paths.
void write_manifest(const std::string& path, const std::vector<Pair>& pairs);
std::vector<Pair> read_manifest(const std::string& path, bool check_files = true);

// One "<id>\t<rule>" line per rejected pair.
void write_rejection_log(const std::string& path, const std::vector<RejectEntry>& rejected);

void write_splits(const std::string& path, const Splits& splits);
Splits read_splits(const std::string& path);

}  // namespace mcap::data
