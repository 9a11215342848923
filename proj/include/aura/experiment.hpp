#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aura/data_io.hpp"
#include "aura/encoders.hpp"
#include "aura/evaluation.hpp"
#include "aura/synthetic.hpp"
#include "aura/training.hpp"

namespace aura {

// ---------------------------------------------------------------------------
// Dataset views shared by the command-line tool and the benchmark
// ---------------------------------------------------------------------------

/// Which modalities a task needs from each record.
struct Needs {
  bool imu = false;
  bool mocap = false;
  bool text = false;
  bool video = false;
  bool label = false;
};

/// The records of one split that carry every needed modality, in dataset
/// order. Raw windows are kept; prepare() with an encoder standardizes them.
struct SplitView {
  std::vector<std::string> ids;  // "<source_id>@<offset_ms>"
  std::vector<Tensor> imu;       // [6 × 1000]
  std::vector<Tensor> mocap;     // [17 × 3 × 50]
  std::vector<TextSnippet> texts;
  std::vector<Tensor> video;  // [D]
  std::vector<std::size_t> labels;  // index into Dataset::labels
  std::size_t size() const { return ids.size(); }
};

SplitView select(const Dataset& ds, Split split, const Needs& needs);

/// Channel statistics of the training windows of one modality (mocap is
/// flattened to [51 × 50] first).
ChannelStats training_stats(std::span<const Tensor> raw_windows, Modality m);

/// prepare_window over many windows.
std::vector<Tensor> prepare_all(const EncoderParams& params, std::span<const Tensor> raw_windows);

/// Rows are anchor embeddings of the texts: [N × anchor dim].
Tensor embed_texts(const FrozenAnchor& anchor, std::span<const TextSnippet> texts);
/// Rows are the given unit vectors: [N × D].
Tensor stack(std::span<const Tensor> rows);

/// Label-text anchor embeddings; each label string is embedded as is.
std::map<std::string, Tensor> label_anchors(const FrozenAnchor& anchor, const Dataset& ds);

/// The pseudo text anchor every run derives from its seed.
FrozenAnchor text_anchor(std::uint64_t seed, std::size_t dim);

// ---------------------------------------------------------------------------
// Seeded synthetic benchmark
// ---------------------------------------------------------------------------

struct BenchmarkConfig {
  SyntheticSpec data;
  std::uint64_t seed = 0;  // every other seed is derived from this one
  EncoderConfig transformer_imu = EncoderConfig::make(EncoderKind::transformer, Modality::imu);
  EncoderConfig rnn_imu = EncoderConfig::make(EncoderKind::rnn, Modality::imu);
  EncoderConfig mocap = EncoderConfig::make(EncoderKind::transformer, Modality::mocap);
  TrainConfig stage1;
  TrainConfig stage2;
  ProbeConfig probe;
  FinetuneConfig finetune;
  std::vector<std::size_t> ks{1, 10, 50};
  /// Also fine-tune randomly initialized encoders of both kinds.
  bool random_init_rows = false;
  std::size_t threads = 1;
  /// Reports, logs and checkpoints; nothing is written when empty.
  std::filesystem::path run_dir;

  /// The configuration the acceptance run uses.
  static BenchmarkConfig standard();
  void validate() const;
};

struct EncoderRow {
  std::string name;  // "transformer", "rnn", "transformer (random init)", ...
  std::optional<HarReport> zeroshot;
  std::optional<HarReport> transfer;
  HarReport finetune;
};

struct BenchmarkResult {
  TrainReport stage1_transformer;
  TrainReport stage1_rnn;
  TrainReport stage2;
  /// Test split, transformer IMU encoder: imu->text and text->imu.
  RetrievalReport imu_to_text;
  RetrievalReport text_to_imu;
  /// Test split, after stage 2: mocap->imu and imu->mocap, plus the same
  /// directions with the untrained mocap encoder.
  RetrievalReport mocap_to_imu;
  RetrievalReport imu_to_mocap;
  RetrievalReport mocap_to_imu_untrained;
  RetrievalReport imu_to_mocap_untrained;
  std::uint64_t imu_checksum_before_stage2 = 0;
  std::uint64_t imu_checksum_after_stage2 = 0;
  std::vector<EncoderRow> rows;
  /// File name -> exact contents of every report the run produces.
  std::map<std::string, std::string> reports;
};

/// Generates the synthetic dataset and runs: stage 1 (IMU against the text
/// anchor) for both encoder kinds, stage 2 (mocap against the frozen
/// transformer IMU encoder), test-split retrieval in both directions, and
/// zero-shot / linear-probe / fine-tune recognition for both kinds.
BenchmarkResult run_benchmark(const BenchmarkConfig& config);

/// Writes `reports` into `dir` (created if needed).
void write_reports(const std::map<std::string, std::string>& reports, const std::filesystem::path& dir);

}  // namespace aura
