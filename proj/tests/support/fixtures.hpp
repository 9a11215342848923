#pragma once

// Randomized on-disk fixtures shared by the format tests and the acceptance
// binary.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "aura/data_io.hpp"
#include "aura/rng.hpp"
#include "gradcheck.hpp"

namespace aura::testing {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("aura_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

inline std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline Tensor random_f32(Shape shape, Rng& rng) { return quantize_f32(random_tensor(std::move(shape), rng)); }

/// A small dataset with every optional field randomly present; keys may
/// collide, so callers validate before use.
inline Dataset random_dataset(Rng& rng) {
  Dataset ds;
  ds.name = "random";
  ds.labels = {"alpha", "beta gamma"};
  ds.embedding_dim = 1 + rng.below(16);
  ds.vocabulary = Vocabulary::from_words(std::vector<std::string>{"alpha", "beta", "gamma", "delta"});
  const std::size_t n = 1 + rng.below(4);
  for (std::size_t i = 0; i < n; ++i) {
    DatasetRecord r;
    r.source_id = "src-" + std::to_string(rng.below(3));
    r.offset_s = static_cast<double>(rng.below(1000)) * 0.5 + static_cast<double>(i) * 1000.0;
    r.split = static_cast<Split>(std::stoi(r.source_id.substr(4)));
    if (rng.below(2)) r.label = ds.labels[rng.below(2)];
    if (rng.below(2)) r.imu = random_f32({kImuChannels, kImuWindowSamples}, rng);
    if (rng.below(2)) {
      r.mocap = random_f32({kMocapJoints, kMocapCoords, kMocapFrames}, rng);
      r.mocap_valid.emplace(kMocapJoints * kMocapFrames);
      for (auto& v : *r.mocap_valid) v = static_cast<std::uint8_t>(rng.below(2));
    }
    if (rng.below(2)) {
      TextSnippet t;
      const std::size_t k = rng.below(kMaxTextTokens + 1);
      for (std::size_t j = 0; j < k; ++j) t.token_ids.push_back(static_cast<int>(rng.below(5)));
      t.raw_text = "some words " + std::to_string(k);
      r.text = t;
    }
    if (rng.below(2)) r.video_emb = random_f32({ds.embedding_dim}, rng);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace aura::testing
