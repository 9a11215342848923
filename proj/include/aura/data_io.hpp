#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aura/signal.hpp"
#include "aura/tensor.hpp"

namespace aura {

// ---------------------------------------------------------------------------
// Tensor blobs
//
//   offset  size  field
//   0       4     magic "AURA"
//   4       4     version (u32, currently 1)
//   8       4     rank (u32)
//   12      4     element type (u32: 0 = float32, 1 = float64)
//   16      8·r   dims (u64 each)
//   ...           payload, row-major, little-endian
//
// Dataset blobs are float32; checkpoints store float64 so parameters
// round-trip exactly.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kBlobVersion = 1;

enum class BlobType : std::uint32_t { f32 = 0, f64 = 1 };

void write_blob(std::ostream& out, const Tensor& t, BlobType type = BlobType::f32);
Tensor read_blob(std::istream& in, const std::string& what = "blob");
void save_blob(const std::filesystem::path& path, const Tensor& t, BlobType type = BlobType::f32);
Tensor load_blob(const std::filesystem::path& path);

/// Rounds every element through float32, the precision of dataset blobs.
Tensor quantize_f32(const Tensor& t);

// ---------------------------------------------------------------------------
// Windowed datasets
// ---------------------------------------------------------------------------

enum class Split { train, val, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct DatasetRecord {
  std::string source_id;
  double offset_s = 0.0;
  Split split = Split::train;
  std::optional<std::string> label;
  std::optional<Tensor> imu;                        // [6 × 1000]
  std::optional<Tensor> mocap;                      // [17 × 3 × 50]
  std::optional<std::vector<std::uint8_t>> mocap_valid;  // [17 × 50]; with mocap
  std::optional<TextSnippet> text;                  // ≤ 77 tokens
  std::optional<Tensor> video_emb;                  // [D]

  /// Offset in whole milliseconds; part of the blob file names.
  long long offset_ms() const;
  std::string blob_stem() const;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct Dataset {
  std::string name;
  std::vector<std::string> labels;  // canonical label order
  std::size_t embedding_dim = 512;  // width of video_emb blobs
  Vocabulary vocabulary;
  std::vector<DatasetRecord> records;

  std::vector<const DatasetRecord*> split(Split s) const;
  /// Throws FormatError on duplicate keys, recordings spanning splits,
  /// or blobs with the wrong shape.
  void validate() const;
};

/// Writes `manifest.txt`, `vocab.txt` and `blobs/<source_id>_<offset_ms>.<modality>.bin`.
/// The directory is created if needed; existing blobs are overwritten.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Assigns each source id to a split: within each group (label), the first
/// floor(0.8·n) ids in sorted order go to train; the remainder of all groups,
/// taken group by group, alternates val, test, val, ...
std::map<std::string, Split> assign_splits(
    const std::vector<std::pair<std::string, std::string>>& source_and_group);

/// Sorts records by (source_id, offset_s).
void sort_records(std::vector<DatasetRecord>& records);

// ---------------------------------------------------------------------------
// Checkpoints: "AURC", version u32, metadata length u64, UTF-8 JSON metadata,
// tensor count u32, then per tensor: name length u32, name bytes, blob (f64).
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string metadata;                  // JSON text
  std::map<std::string, Tensor> tensors;  // sorted by name on disk

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in, const std::string& what = "checkpoint");

}  // namespace aura
