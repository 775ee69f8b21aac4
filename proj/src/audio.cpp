#include "mcap/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mcap/common.hpp"

namespace mcap::audio {

using num::Matrix;
using num::Vec;

void validate_clip(const AudioClip& clip) {
  if (clip.frame_rate <= 0.0 || clip.duration <= 0.0)
    throw ShapeError("audio clip needs positive frame_rate and duration");
  const long long want = std::llround(clip.duration * clip.frame_rate);
  if (clip.frames.rows != want)
    throw ShapeError("audio clip has " + std::to_string(clip.frames.rows) +
                     " frames but duration*frame_rate rounds to " + std::to_string(want));
}

ChunkSet chunk(const AudioClip& clip, double n_seconds) {
  if (n_seconds <= 0.0) throw Error("chunk length must be positive");
  if (clip.duration < n_seconds)
    throw Error("clip of " + std::to_string(clip.duration) +
                " s is shorter than one chunk (" + std::to_string(n_seconds) + " s)");
  const int per = static_cast<int>(std::llround(n_seconds * clip.frame_rate));
  if (per <= 0) throw Error("chunk length rounds to zero frames");
  const int total = clip.frames.rows;
  const int L = total / per;  // trailing remainder dropped
  if (L < 1) throw Error("clip too short: no complete chunk");

  ChunkSet out;
  out.chunk_seconds = n_seconds;
  out.frames_per_chunk = per;
  out.feature_dim = clip.frames.cols;
  out.chunks.reserve(L);
  for (int l = 0; l < L; ++l) {
    Matrix block(per, clip.frames.cols);
    std::memcpy(block.v.data(), clip.frames.row(l * per),
                sizeof(double) * static_cast<size_t>(per) * clip.frames.cols);
    out.chunks.push_back(std::move(block));
  }
  return out;
}

FeatureSequence extract_precomputed(const ChunkSet& chunks, const Matrix& stored) {
  if (stored.rows != chunks.size())
    throw ShapeError("stored features have " + std::to_string(stored.rows) +
                     " rows but the clip chunks into " + std::to_string(chunks.size()));
  if (!stored.all_finite()) throw NumericError("stored features contain non-finite values");
  return FeatureSequence{stored};
}

FeatureSequence frontend_forward(const ChunkSet& chunks, const Matrix& w,
                                 const Matrix& b, FrontendCache* cache) {
  const int F = chunks.feature_dim;
  const int k = w.rows;
  if (w.cols != 3 * F)
    throw ShapeError("frontend conv expects " + std::to_string(3 * F) +
                     " input columns, got " + std::to_string(w.cols));
  num::require_shape(b, k, 1, "frontend bias");
  const int L = chunks.size();
  if (L < 1) throw Error("frontend got an empty chunk set");

  FeatureSequence out;
  out.features = Matrix(L, k);
  if (cache) {
    cache->act.clear();
    cache->act.reserve(L);
  }
  Vec window(3 * F);
  for (int l = 0; l < L; ++l) {
    const Matrix& x = chunks.chunks[l];
    const int n = x.rows;
    Matrix act(n, k);
    for (int t = 0; t < n; ++t) {
      std::fill(window.begin(), window.end(), 0.0);
      if (t > 0) std::memcpy(window.data(), x.row(t - 1), sizeof(double) * F);
      std::memcpy(window.data() + F, x.row(t), sizeof(double) * F);
      if (t + 1 < n) std::memcpy(window.data() + 2 * F, x.row(t + 1), sizeof(double) * F);
      for (int j = 0; j < k; ++j) {
        const double* wr = w.row(j);
        double z = b.v[j];
        for (int c = 0; c < 3 * F; ++c) z += wr[c] * window[c];
        act.at(t, j) = std::tanh(z);
      }
    }
    double* fr = out.features.row(l);
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int t = 0; t < n; ++t) s += act.at(t, j);
      fr[j] = s / n;
    }
    if (cache) cache->act.push_back(std::move(act));
  }
  return out;
}

void frontend_backward(const ChunkSet& chunks, const FrontendCache& cache,
                       const Matrix& w, const Matrix& d_features,
                       Matrix& d_w, Matrix& d_b) {
  const int F = chunks.feature_dim;
  const int k = w.rows;
  const int L = chunks.size();
  num::require_shape(d_features, L, k, "frontend upstream gradient");
  if (static_cast<int>(cache.act.size()) != L)
    throw ShapeError("frontend cache does not match the chunk set");
  num::require_shape(d_w, k, 3 * F, "frontend weight gradient");
  num::require_shape(d_b, k, 1, "frontend bias gradient");

  Vec window(3 * F);
  for (int l = 0; l < L; ++l) {
    const Matrix& x = chunks.chunks[l];
    const Matrix& act = cache.act[l];
    const int n = x.rows;
    const double* dfr = d_features.row(l);
    for (int t = 0; t < n; ++t) {
      std::fill(window.begin(), window.end(), 0.0);
      if (t > 0) std::memcpy(window.data(), x.row(t - 1), sizeof(double) * F);
      std::memcpy(window.data() + F, x.row(t), sizeof(double) * F);
      if (t + 1 < n) std::memcpy(window.data() + 2 * F, x.row(t + 1), sizeof(double) * F);
      for (int j = 0; j < k; ++j) {
        const double a = act.at(t, j);
        const double dz = (dfr[j] / n) * (1.0 - a * a);
        if (dz == 0.0) continue;
        double* dwr = d_w.row(j);
        for (int c = 0; c < 3 * F; ++c) dwr[c] += dz * window[c];
        d_b.v[j] += dz;
      }
    }
  }
}

TrackEmbedding mean_pool(const FeatureSequence& seq) {
  const int L = seq.features.rows;
  const int k = seq.features.cols;
  if (L < 1) throw Error("mean_pool over an empty feature sequence");
  TrackEmbedding out;
  out.v.assign(k, 0.0);
  for (int l = 0; l < L; ++l) {
    const double* r = seq.features.row(l);
    for (int j = 0; j < k; ++j) out.v[j] += r[j];
  }
  for (int j = 0; j < k; ++j) out.v[j] /= L;
  return out;
}

void mean_pool_backward(const Vec& d_pooled, Matrix& d_features) {
  const int L = d_features.rows;
  const int k = d_features.cols;
  if (L < 1) throw Error("mean_pool_backward over an empty gradient matrix");
  num::require_len(static_cast<int>(d_pooled.size()), k, "pooled gradient");
  for (int l = 0; l < L; ++l) {
    double* r = d_features.row(l);
    for (int j = 0; j < k; ++j) r[j] += d_pooled[j] / L;
  }
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& is, uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
      (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace

Matrix read_matrix_file(const std::string& path, const char magic[4]) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char got[4];
  if (!is.read(got, 4)) throw ParseError(path + ": truncated header");
  if (std::memcmp(got, magic, 4) != 0)
    throw ParseError(path + ": bad magic, expected " + std::string(magic, 4));
  uint32_t rows = 0, cols = 0;
  if (!get_u32(is, rows) || !get_u32(is, cols))
    throw ParseError(path + ": truncated header");
  if (rows == 0 || cols == 0) throw ParseError(path + ": zero-sized matrix");
  const uint64_t count = static_cast<uint64_t>(rows) * cols;
  if (count > (1ull << 31)) throw ParseError(path + ": implausible matrix size");
  std::vector<unsigned char> raw(count * 4);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw ParseError(path + ": truncated payload");
  Matrix m(static_cast<int>(rows), static_cast<int>(cols));
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t bits = static_cast<uint32_t>(raw[4 * i]) |
                    (static_cast<uint32_t>(raw[4 * i + 1]) << 8) |
                    (static_cast<uint32_t>(raw[4 * i + 2]) << 16) |
                    (static_cast<uint32_t>(raw[4 * i + 3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    m.v[i] = static_cast<double>(f);
  }
  return m;
}

void write_matrix_file(const std::string& path, const char magic[4], const Matrix& m) {
  if (m.rows < 1 || m.cols < 1) throw Error("refusing to write an empty matrix to " + path);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os.write(magic, 4);
  put_u32(os, static_cast<uint32_t>(m.rows));
  put_u32(os, static_cast<uint32_t>(m.cols));
  for (size_t i = 0; i < m.v.size(); ++i) {
    const float f = static_cast<float>(m.v[i]);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                          static_cast<unsigned char>((bits >> 8) & 0xff),
                          static_cast<unsigned char>((bits >> 16) & 0xff),
                          static_cast<unsigned char>((bits >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!os) throw IoError("write failed for " + path);
}

Matrix read_feature_file(const std::string& path) { return read_matrix_file(path, kFeatureMagic); }
void write_feature_file(const std::string& path, const Matrix& m) {
  write_matrix_file(path, kFeatureMagic, m);
}
Matrix read_frames_file(const std::string& path) { return read_matrix_file(path, kFramesMagic); }
void write_frames_file(const std::string& path, const Matrix& m) {
  write_matrix_file(path, kFramesMagic, m);
}

}  // namespace mcap::audio
