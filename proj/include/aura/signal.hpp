#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aura/tensor.hpp"

namespace aura {

inline constexpr std::size_t kImuChannels = 6;
inline constexpr double kImuRateHz = 200.0;
inline constexpr double kWindowSeconds = 5.0;
inline constexpr std::size_t kImuWindowSamples = 1000;
inline constexpr std::size_t kMocapJoints = 17;
inline constexpr std::size_t kMocapCoords = 3;
inline constexpr double kMocapRateHz = 10.0;
inline constexpr std::size_t kMocapFrames = 50;
inline constexpr std::size_t kMocapChannels = kMocapJoints * kMocapCoords;
inline constexpr std::size_t kMaxTextTokens = 77;

/// Multichannel signal on a uniform time grid: sample j of every channel is
/// taken at start_time_s + j / rate_hz.
struct TimeSeries {
  Tensor samples;  // [channels × T]
  double rate_hz = 1.0;
  double start_time_s = 0.0;

  /// Validates T ≥ 1 and rate_hz > 0.
  static TimeSeries make(Tensor samples, double rate_hz, double start_time_s = 0.0);

  std::size_t channels() const { return samples.dim(0); }
  std::size_t length() const { return samples.dim(1); }
  double duration_s() const { return static_cast<double>(length()) / rate_hz; }
  double time_of(std::size_t j) const {
    return start_time_s + static_cast<double>(j) / rate_hz;
  }
};

/// Linear-interpolation resampling onto t_j = start + j/dst_rate covering
/// [start, start + (T−1)/src_rate]. Points that coincide with source
/// samples reproduce them exactly.
TimeSeries resample_linear(const TimeSeries& ts, double dst_rate_hz);

struct SignalWindow {
  Tensor samples;  // [channels × window samples]
  double offset_s = 0.0;
};

/// Fully contained windows starting at 0, stride, 2·stride, ... relative to
/// the series start. `stride_s` defaults to `window_s` (non-overlapping).
/// A window longer than the series yields an empty list and a warning.
std::vector<SignalWindow> slide_windows(const TimeSeries& ts, double window_s = kWindowSeconds,
                                        std::optional<double> stride_s = std::nullopt);

/// Number of windows slide_windows produces for a series of `length`
/// samples; exposed for callers that only need the count.
std::size_t window_count(std::size_t length, double rate_hz, double window_s, double stride_s);

/// 6 × 1000 IMU window: accel x/y/z then gyro x/y/z at 200 Hz for 5 s.
struct ImuWindow {
  Tensor samples;
  std::string source_id;
  double offset_s = 0.0;

  /// Throws DimensionError unless the shape is exactly 6×1000 and
  /// NumericError on non-finite values.
  static ImuWindow make(Tensor samples, std::string source_id, double offset_s);
};

/// 17 joints × xyz × 50 frames (10 FPS for 5 s) with a per-joint, per-frame
/// validity mask stored joint-major ([17 × 50]).
struct MocapWindow {
  Tensor joints;
  std::vector<std::uint8_t> validity;
  std::string source_id;
  double offset_s = 0.0;

  static MocapWindow make(Tensor joints, std::vector<std::uint8_t> validity,
                          std::string source_id, double offset_s);
  bool valid(std::size_t joint, std::size_t frame) const {
    return validity[joint * kMocapFrames + frame] != 0;
  }
  /// Flattened [51 × 50] view used by the encoders (channel = joint·3 + coord).
  Tensor as_channels() const;
};

/// Fills invalid entries of `values` by linear interpolation between the
/// nearest valid neighbours; leading and trailing gaps take the nearest
/// valid value. Returns false (values untouched) when nothing is valid.
bool fill_gaps_linear(std::span<double> values, std::span<const std::uint8_t> valid);

struct GapFilled {
  Tensor joints;                       // [17 × 3 × N]
  std::vector<std::uint8_t> validity;  // [17 × N]
};

/// Per-coordinate interpolation of each joint track; a joint with no valid
/// frame becomes all zeros with validity false everywhere.
GapFilled fill_mocap_gaps(const Tensor& frames, std::span<const std::uint8_t> validity);

struct TextSnippet {
  std::vector<int> token_ids;
  std::string raw_text;

  friend bool operator==(const TextSnippet&, const TextSnippet&) = default;
};

/// Keeps at most the first 77 tokens.
TextSnippet truncate_text(std::span<const int> tokens, std::string raw_text = {});

/// Word list with id = position; id 0 is reserved for unknown words.
class Vocabulary {
 public:
  static constexpr int kUnknownId = 0;
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();
  /// Builds from words in first-seen order (deduplicated, lowercased).
  static Vocabulary from_words(std::span<const std::string> words);
  /// One word per line; the first line must be "<unk>".
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int id(std::string_view word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  void add(std::string word);
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<int> tokenize(std::string_view text) const = 0;
};

/// Lowercases and splits on whitespace; words outside the vocabulary map
/// to the unknown id.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  explicit WhitespaceTokenizer(Vocabulary vocab) : vocab_(std::move(vocab)) {}
  std::vector<int> tokenize(std::string_view text) const override;
  const Vocabulary& vocabulary() const { return vocab_; }

 private:
  Vocabulary vocab_;
};

/// Lowercased whitespace-separated words of `text`.
std::vector<std::string> split_words(std::string_view text);

/// Tokenizes then truncates to the 77-token limit.
TextSnippet encode_text(const Tokenizer& tokenizer, std::string_view text);

/// Per-channel mean and standard deviation.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::size_t channels() const { return mean.size(); }
};

/// Population statistics over all samples of all windows (each [C × T]).
ChannelStats compute_channel_stats(std::span<const Tensor> windows);

/// (x − mean) / std per channel; std below 1e-8 is clamped to 1e-8.
Tensor standardize_channels(const Tensor& window, const ChannelStats& stats);

}  // namespace aura
