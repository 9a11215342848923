#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aura/data_io.hpp"

namespace aura {

// ---------------------------------------------------------------------------
// PAMAP2 protocol files: whitespace-separated rows of 54 columns
// (timestamp, activity id, heart rate, then hand/chest/ankle IMU blocks of
// 17 columns). Missing readings are written as NaN.
// ---------------------------------------------------------------------------

enum class Pamap2Accel { range16g, range6g };

struct Pamap2Options {
  Pamap2Accel accel = Pamap2Accel::range16g;
  std::string subject = "subject101";  // source_id prefix
  double window_s = kWindowSeconds;
  std::optional<double> stride_s;  // defaults to window_s
  /// Rows further apart than this (or with a different activity) start a new segment.
  double max_step_s = 0.05;
};

/// Activity id → name for the eighteen protocol and optional activities.
const std::map<int, std::string>& pamap2_activities();

/// Names in ascending id order.
std::vector<std::string> pamap2_labels();

/// Each contiguous single-activity segment becomes one recording
/// ("<subject>-s<k>"; the file overload uses each file's stem as subject). Chest accelerometer + gyroscope are gap-filled per
/// channel, upsampled 100 → 200 Hz and cut into 5 s windows. Rows with
/// activity 0 (transient) are skipped. Errors: FormatError on short rows or
/// unknown activity ids.
Dataset ingest_pamap2(std::istream& rows, const Pamap2Options& options = {});
Dataset ingest_pamap2(const std::vector<std::filesystem::path>& files, const Pamap2Options& options = {});

// ---------------------------------------------------------------------------
// Pre-exported window tensors (Ego-Exo4D style). The directory holds
// `index.jsonl`, one JSON object per window:
//   {"source_id": "...", "offset_s": 0, "label": "Cooking", "text": "...",
//    "imu": "a.bin", "mocap": "b.bin", "mocap_valid": "c.bin", "video_emb": "d.bin",
//    "split": "train"}
// Blob paths are relative to the directory and use the tensor blob format.
// `label`, `text`, `split` and every modality are optional; the vocabulary
// is built from the texts. Records without a split are assigned one with
// assign_splits, grouped by label.
// ---------------------------------------------------------------------------

Dataset ingest_windows(const std::filesystem::path& dir, std::string name = "windows");

}  // namespace aura
