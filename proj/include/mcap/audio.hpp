#pragma once

#include <string>
#include <vector>

#include "mcap/matrix.hpp"

namespace mcap::audio {

// Raw per-track input: a sequence of frame feature vectors (mel-like), not waveform.
struct AudioClip {
  num::Matrix frames;       // N_frames x F
  double frame_rate = 0.0;  // frames per second
  double duration = 0.0;    // seconds
};

// Throws ShapeError unless rows(frames) == round(duration * frame_rate).
void validate_clip(const AudioClip& clip);

struct ChunkSet {
  std::vector<num::Matrix> chunks;  // L blocks, each frames_per_chunk x F
  double chunk_seconds = 0.0;
  int frames_per_chunk = 0;
  int feature_dim = 0;  // F
  int size() const { return static_cast<int>(chunks.size()); }
};

// Chunk-level audio features A = {a_1..a_L}.
struct FeatureSequence {
  num::Matrix features;  // L x k
};

// Track-level embedding: column mean of a FeatureSequence.
struct TrackEmbedding {
  num::Vec v;  // k
};

// Consecutive non-overlapping chunks of exactly n seconds; the trailing
// remainder shorter than n is dropped. duration < n is an error.
ChunkSet chunk(const AudioClip& clip, double n_seconds);

// Frozen extractor: features were precomputed offline; this just checks that
// the stored row count matches the chunking and passes the matrix through.
FeatureSequence extract_precomputed(const ChunkSet& chunks, const num::Matrix& stored);

// Trainable frontend: width-3 1-D convolution over time within each chunk
// (zero-padded ends), bias, tanh, then temporal mean per chunk.
//   w: k x 3F (window = [x_{t-1}; x_t; x_{t+1}]), b: k x 1.
struct FrontendCache {
  std::vector<num::Matrix> act;  // per chunk: n_frames x k tanh outputs
};

FeatureSequence frontend_forward(const ChunkSet& chunks, const num::Matrix& w,
                                 const num::Matrix& b, FrontendCache* cache = nullptr);

// Accumulates into d_w / d_b (callers zero them when starting fresh).
// d_features: L x k upstream gradient.
void frontend_backward(const ChunkSet& chunks, const FrontendCache& cache,
                       const num::Matrix& w, const num::Matrix& d_features,
                       num::Matrix& d_w, num::Matrix& d_b);

// Arithmetic mean over the L rows; empty sequence is an error.
TrackEmbedding mean_pool(const FeatureSequence& seq);

// Spreads a track-embedding gradient back to the feature rows (adds d/L to
// every row of d_features).
void mean_pool_backward(const num::Vec& d_pooled, num::Matrix& d_features);

// Binary matrix files: 4-byte magic, u32 LE rows, u32 LE cols, then
// rows*cols float32 LE values row-major. "MCF1" holds chunk features
// (rows = L, cols = k); "MCA1" holds raw frames (rows = N_frames, cols = F).
num::Matrix read_matrix_file(const std::string& path, const char magic[4]);
void write_matrix_file(const std::string& path, const char magic[4], const num::Matrix& m);

inline constexpr char kFeatureMagic[4] = {'M', 'C', 'F', '1'};
inline constexpr char kFramesMagic[4] = {'M', 'C', 'A', '1'};

num::Matrix read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const num::Matrix& m);
num::Matrix read_frames_file(const std::string& path);
void write_frames_file(const std::string& path, const num::Matrix& m);

}  // namespace mcap::audio
