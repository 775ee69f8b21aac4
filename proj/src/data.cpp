#include "mcap/data.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <string_view>

#include "json.hpp"
#include "mcap/audio.hpp"
#include "mcap/common.hpp"
#include "mcap/rng.hpp"
#include "mcap/text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mcap::data {

FilterResult filter_pairs(const std::vector<Pair>& pairs) {
  FilterResult out;
  std::set<std::string> seen;
  for (const Pair& p : pairs) {
    if (p.duration < 30.0 || p.duration > 360.0) {
      out.rejected.push_back({p.id, "duration"});
      continue;
    }
    const size_t n_tok = text::tokenize(p.caption).size();
    if (n_tok < 3 || n_tok > 22) {
      out.rejected.push_back({p.id, "token_count"});
      continue;
    }
    if (!seen.insert(p.caption).second) {
      out.rejected.push_back({p.id, "duplicate_caption"});
      continue;
    }
    out.kept.push_back(p);
  }
  return out;
}

Splits split(const std::vector<Pair>& pairs, const SplitSpec& spec) {
  const double sum = spec.train + spec.val + spec.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw Error("split ratios sum to " + std::to_string(sum) + ", expected 1");
  if (spec.train < 0 || spec.val < 0 || spec.test < 0)
    throw Error("split ratios must be non-negative");
  const int n = static_cast<int>(pairs.size());
  if (n < 3) throw Error("need at least 3 pairs to split, got " + std::to_string(n));

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order.begin(), order.end());

  const int n_val = static_cast<int>(std::floor(spec.val * n));
  const int n_test = static_cast<int>(std::floor(spec.test * n));
  const int n_train = n - n_val - n_test;  // remainder lands in train

  Splits s;
  for (int i = 0; i < n_train; ++i) s.train.push_back(pairs[order[i]].id);
  for (int i = n_train; i < n_train + n_val; ++i) s.val.push_back(pairs[order[i]].id);
  for (int i = n_train + n_val; i < n; ++i) s.test.push_back(pairs[order[i]].id);
  return s;
}

namespace {

constexpr std::array<std::string_view, 60> kMoods = {
    "upbeat", "mellow", "somber",  "dreamy",  "driving", "gentle",  "brooding", "breezy",
    "tense",  "playful", "solemn", "gritty",  "airy",    "wistful", "fiery",    "calm",
    "restless", "lush",  "stark",  "jaunty",  "moody",   "bright",  "dusky",    "nervy",
    "serene", "rowdy",  "hazy",    "bold",    "timid",   "spry",    "sultry",   "icy",
    "warm",   "bleak",  "chipper", "grave",   "perky",   "murky",   "sunny",    "stormy",
    "floaty", "edgy",   "smoky",   "glassy",  "heavy",   "weightless", "brassy", "velvety",
    "spiky",  "mild",   "eager",   "weary",   "frantic", "placid",  "rugged",   "silky",
    "jagged", "soft",   "wild",    "steady"};

constexpr std::array<std::string_view, 60> kInstruments = {
    "guitar",   "piano",    "violin",   "cello",     "flute",     "trumpet",   "saxophone",
    "drums",    "bass",     "organ",    "banjo",     "mandolin",  "harp",      "clarinet",
    "oboe",     "trombone", "synth",    "fiddle",    "ukulele",   "accordion", "marimba",
    "vibraphone", "bongos", "congas",   "sitar",     "tabla",     "koto",      "shamisen",
    "bagpipes", "harmonica", "dulcimer", "zither",   "lute",      "lyre",      "ocarina",
    "recorder", "bassoon",  "piccolo",  "cornet",    "tuba",      "euphonium", "glockenspiel",
    "xylophone", "celesta", "harpsichord", "clavinet", "theremin", "kalimba",  "djembe",
    "cajon",    "timpani",  "chimes",   "bells",     "strings",   "brass",     "woodwinds",
    "keys",     "pads",     "arpeggios", "leads"};

constexpr std::array<std::string_view, 60> kDescriptors = {
    "groove",   "melody",  "theme",   "riff",      "motif",   "vamp",    "hook",    "refrain",
    "cadence",  "shuffle", "waltz",   "march",     "ballad",  "anthem",  "lullaby", "serenade",
    "nocturne", "prelude", "interlude", "overture", "fanfare", "jig",    "reel",    "polka",
    "bolero",   "tango",   "samba",   "bossa",     "swing",   "stomp",   "strut",   "drift",
    "pulse",    "drone",   "chant",   "hymn",      "round",   "canon",   "fugue",   "toccata",
    "rhapsody", "caprice", "etude",   "sonata",    "suite",   "medley",  "jam",     "loop",
    "breakdown", "drop",   "build",   "sweep",     "swell",   "churn",   "ripple",  "cascade",
    "flutter",  "shimmer", "rumble",  "glide"};

constexpr int kWordsPerClass = 4;

std::string make_caption(int tmpl, std::string_view m, std::string_view i,
                         std::string_view d, std::string_view d2) {
  std::string s;
  switch (tmpl) {
    case 0: s = std::string(m) + " " + std::string(i) + " " + std::string(d); break;
    case 1: s = std::string(m) + " " + std::string(i) + " " + std::string(d) + " tune"; break;
    case 2: s = "a " + std::string(m) + " " + std::string(i) + " " + std::string(d); break;
    case 3: s = std::string(m) + " " + std::string(i) + " with " + std::string(d); break;
    default:  // extended form used only when the short ones collide
      s = std::string(m) + " " + std::string(i) + " " + std::string(d) + " and " + std::string(d2);
      break;
  }
  return s;
}

}  // namespace

SynthResult generate_synthetic(const SynthConfig& cfg) {
  const int K = cfg.classes;
  if (K < 2) throw Error("need at least 2 classes");
  if (K * kWordsPerClass > static_cast<int>(kMoods.size()))
    throw Error("word banks support at most " +
                std::to_string(kMoods.size() / kWordsPerClass) + " classes");
  if (cfg.pairs < 1) throw Error("need at least 1 pair");
  if (cfg.feature_dim < 1) throw Error("feature_dim must be positive");
  if (cfg.min_duration > cfg.max_duration || cfg.min_duration < cfg.chunk_seconds)
    throw Error("duration range must fit at least one chunk");
  if (cfg.out_dir.empty()) throw Error("output directory not set");

  fs::create_directories(fs::path(cfg.out_dir) / "frames");
  fs::create_directories(fs::path(cfg.out_dir) / "features");

  Rng rng(cfg.seed);
  const int F = cfg.feature_dim;

  // Class signatures: a base point, a unit oscillation direction, a frequency.
  std::vector<num::Vec> base(K), dir(K);
  std::vector<double> freq(K);
  for (int c = 0; c < K; ++c) {
    base[c].resize(F);
    for (double& x : base[c]) x = rng.uniform(-1.0, 1.0);
    dir[c].resize(F);
    double norm2 = 0.0;
    for (double& x : dir[c]) {
      x = rng.normal(0.0, 1.0);
      norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
    for (double& x : dir[c]) x *= inv;
    freq[c] = rng.uniform(0.2, 1.0);
  }

  SynthResult out;
  std::set<std::string> used_captions;
  for (int i = 0; i < cfg.pairs; ++i) {
    Pair p;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "clip_%04d", i);
    p.id = idbuf;
    const int c = rng.uniform_int(0, K - 1);
    p.klass = c;
    p.duration = rng.uniform(cfg.min_duration, cfg.max_duration);

    const int n_frames = static_cast<int>(std::llround(p.duration * cfg.frame_rate));
    num::Matrix frames(n_frames, F);
    for (int t = 0; t < n_frames; ++t) {
      const double sec = t / cfg.frame_rate;
      const double osc = 0.5 * std::sin(2.0 * std::numbers::pi * freq[c] * sec);
      double* row = frames.row(t);
      for (int j = 0; j < F; ++j)
        row[j] = base[c][j] + osc * dir[c][j] + rng.normal(0.0, cfg.noise_sigma);
    }

    // Frozen "pretrained" features: per-chunk means of the frames.
    audio::AudioClip clip{frames, cfg.frame_rate, p.duration};
    audio::ChunkSet chunks = audio::chunk(clip, cfg.chunk_seconds);
    num::Matrix feats(chunks.size(), F);
    for (int l = 0; l < chunks.size(); ++l) {
      const num::Matrix& blk = chunks.chunks[l];
      double* fr = feats.row(l);
      for (int j = 0; j < F; ++j) {
        double s = 0.0;
        for (int t = 0; t < blk.rows; ++t) s += blk.at(t, j);
        fr[j] = s / blk.rows;
      }
    }

    const auto pick = [&](const std::array<std::string_view, 60>& bank) {
      return bank[c * kWordsPerClass + rng.uniform_int(0, kWordsPerClass - 1)];
    };
    std::string caption;
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      caption = make_caption(rng.uniform_int(0, 3), pick(kMoods), pick(kInstruments),
                             pick(kDescriptors), "");
      placed = used_captions.insert(caption).second;
    }
    for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
      const std::string_view d = pick(kDescriptors);
      std::string_view d2 = pick(kDescriptors);
      while (d2 == d) d2 = pick(kDescriptors);
      caption = make_caption(4, pick(kMoods), pick(kInstruments), d, d2);
      placed = used_captions.insert(caption).second;
    }
    if (!placed) throw Error("could not find an unused caption for " + p.id);
    p.caption = caption;

    p.frames_path = "frames/" + p.id + ".mca1";
    p.features_path = "features/" + p.id + ".mcf1";
    audio::write_frames_file((fs::path(cfg.out_dir) / p.frames_path).string(), frames);
    audio::write_feature_file((fs::path(cfg.out_dir) / p.features_path).string(), feats);
    out.pairs.push_back(std::move(p));
  }

  out.manifest_path = (fs::path(cfg.out_dir) / "manifest.jsonl").string();
  write_manifest(out.manifest_path, out.pairs);
  // The manifest stays relocatable (relative paths); the returned pairs are
  // immediately usable.
  for (Pair& p : out.pairs) {
    p.frames_path = (fs::path(cfg.out_dir) / p.frames_path).string();
    p.features_path = (fs::path(cfg.out_dir) / p.features_path).string();
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<Pair>& pairs) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  for (const Pair& p : pairs) {
    json j;
    j["id"] = p.id;
    if (!p.frames_path.empty()) j["frames"] = p.frames_path;
    if (!p.features_path.empty()) j["features"] = p.features_path;
    j["caption"] = p.caption;
    j["duration_seconds"] = p.duration;
    os << j.dump() << "\n";
  }
  if (!os) throw IoError("write failed for " + path);
}

std::vector<Pair> read_manifest(const std::string& path, bool check_files) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  const fs::path dir = fs::path(path).parent_path();
  const auto resolve = [&](const std::string& rel) {
    fs::path p(rel);
    return p.is_absolute() ? p.string() : (dir / p).string();
  };

  std::vector<Pair> pairs;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Pair p;
    try {
      p.id = j.at("id").get<std::string>();
      p.caption = j.at("caption").get<std::string>();
      p.duration = j.at("duration_seconds").get<double>();
      if (j.contains("frames")) p.frames_path = resolve(j["frames"].get<std::string>());
      if (j.contains("features")) p.features_path = resolve(j["features"].get<std::string>());
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (p.frames_path.empty() && p.features_path.empty())
      throw ParseError(path + ":" + std::to_string(lineno) + ": record " + p.id +
                       " has neither frames nor features");
    if (!ids.insert(p.id).second)
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate id " + p.id);
    if (check_files) {
      if (!p.frames_path.empty() && !fs::exists(p.frames_path))
        throw IoError(p.id + ": missing file " + p.frames_path);
      if (!p.features_path.empty() && !fs::exists(p.features_path))
        throw IoError(p.id + ": missing file " + p.features_path);
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void write_rejection_log(const std::string& path, const std::vector<RejectEntry>& rejected) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  for (const RejectEntry& r : rejected) os << r.id << "\t" << r.rule << "\n";
  if (!os) throw IoError("write failed for " + path);
}

void write_splits(const std::string& path, const Splits& splits) {
  json j;
  j["train"] = splits.train;
  j["val"] = splits.val;
  j["test"] = splits.test;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed for " + path);
}

Splits read_splits(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  Splits s;
  try {
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return s;
}

}  // namespace mcap::data
