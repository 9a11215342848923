#include "aura/signal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "aura/error.hpp"
#include "aura/log.hpp"

namespace aura {

TimeSeries TimeSeries::make(Tensor samples, double rate_hz, double start_time_s) {
  require_rank(samples, 2, "TimeSeries samples");
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) {
    throw ConfigError("TimeSeries: rate_hz must be positive, got " + std::to_string(rate_hz));
  }
  return TimeSeries{std::move(samples), rate_hz, start_time_s};
}

TimeSeries resample_linear(const TimeSeries& ts, double dst_rate_hz) {
  if (!(dst_rate_hz > 0.0) || !std::isfinite(dst_rate_hz)) {
    throw ConfigError("resample_linear: destination rate must be positive, got " +
                      std::to_string(dst_rate_hz));
  }
  const std::size_t n = ts.length();
  if (n < 2) {
    throw InsufficientDataError("resample_linear: need at least 2 samples, got " +
                                std::to_string(n));
  }
  const double ratio = ts.rate_hz / dst_rate_hz;  // source steps per output step
  // Tolerance guards against the last grid point landing a hair past the end.
  const double span_out = static_cast<double>(n - 1) / ratio;
  const auto n_out = static_cast<std::size_t>(std::floor(span_out + 1e-9)) + 1;
  const std::size_t c = ts.channels();
  Tensor out({c, n_out});
  for (std::size_t j = 0; j < n_out; ++j) {
    const double u = static_cast<double>(j) * ts.rate_hz / dst_rate_hz;
    auto i0 = static_cast<std::size_t>(std::floor(u));
    if (i0 >= n - 1) i0 = n - 1;
    const double frac = u - static_cast<double>(i0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double a = ts.samples(ch, i0);
      if (frac <= 0.0 || i0 == n - 1) {
        out(ch, j) = a;
      } else {
        const double b = ts.samples(ch, i0 + 1);
        out(ch, j) = a + frac * (b - a);
      }
    }
  }
  return TimeSeries{std::move(out), dst_rate_hz, ts.start_time_s};
}

namespace {

std::size_t to_samples(double seconds, double rate_hz) {
  return static_cast<std::size_t>(std::llround(seconds * rate_hz));
}

}  // namespace

std::size_t window_count(std::size_t length, double rate_hz, double window_s, double stride_s) {
  const std::size_t w = to_samples(window_s, rate_hz);
  const std::size_t s = to_samples(stride_s, rate_hz);
  if (w == 0 || s == 0) throw ConfigError("window and stride must span at least one sample");
  if (w > length) return 0;
  return (length - w) / s + 1;
}

std::vector<SignalWindow> slide_windows(const TimeSeries& ts, double window_s,
                                        std::optional<double> stride_s) {
  const double stride = stride_s.value_or(window_s);
  if (!(window_s > 0.0) || !(stride > 0.0)) {
    throw ConfigError("slide_windows: window and stride must be positive");
  }
  const std::size_t count = window_count(ts.length(), ts.rate_hz, window_s, stride);
  if (count == 0) {
    log::warn("slide_windows: " + std::to_string(window_s) + " s window is longer than the " +
              std::to_string(ts.duration_s()) + " s series; no windows emitted");
    return {};
  }
  const std::size_t w = to_samples(window_s, ts.rate_hz);
  const std::size_t s = to_samples(stride, ts.rate_hz);
  const std::size_t c = ts.channels();
  std::vector<SignalWindow> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Tensor win({c, w});
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto src = ts.samples.row(ch).subspan(k * s, w);
      std::copy(src.begin(), src.end(), win.row(ch).begin());
    }
    out.push_back({std::move(win), static_cast<double>(k * s) / ts.rate_hz});
  }
  return out;
}

ImuWindow ImuWindow::make(Tensor samples, std::string source_id, double offset_s) {
  if (samples.shape() != Shape{kImuChannels, kImuWindowSamples}) {
    throw DimensionError("IMU window must be [6x1000], got " + shape_string(samples.shape()));
  }
  if (!samples.all_finite()) throw NumericError("IMU window contains non-finite values");
  return ImuWindow{std::move(samples), std::move(source_id), offset_s};
}

MocapWindow MocapWindow::make(Tensor joints, std::vector<std::uint8_t> validity,
                              std::string source_id, double offset_s) {
  if (joints.shape() != Shape{kMocapJoints, kMocapCoords, kMocapFrames}) {
    throw DimensionError("mocap window must be [17x3x50], got " + shape_string(joints.shape()));
  }
  if (validity.size() != kMocapJoints * kMocapFrames) {
    throw DimensionError("mocap validity mask must have 17*50 entries, got " +
                         std::to_string(validity.size()));
  }
  if (!joints.all_finite()) throw NumericError("mocap window contains non-finite values");
  for (std::size_t j = 0; j < kMocapJoints; ++j) {
    const bool any = std::any_of(validity.begin() + j * kMocapFrames,
                                 validity.begin() + (j + 1) * kMocapFrames,
                                 [](std::uint8_t v) { return v != 0; });
    if (any) continue;
    for (std::size_t i = j * kMocapCoords * kMocapFrames; i < (j + 1) * kMocapCoords * kMocapFrames; ++i) {
      if (joints[i] != 0.0) {
        throw FormatError("mocap joint " + std::to_string(j) +
                          " has no valid frames but non-zero coordinates");
      }
    }
  }
  return MocapWindow{std::move(joints), std::move(validity), std::move(source_id), offset_s};
}

Tensor MocapWindow::as_channels() const { return joints.reshaped({kMocapChannels, kMocapFrames}); }

bool fill_gaps_linear(std::span<double> values, std::span<const std::uint8_t> valid) {
  if (values.size() != valid.size()) throw DimensionError("fill_gaps_linear: length mismatch");
  const std::size_t n = values.size();
  std::size_t first = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i]) {
      first = i;
      break;
    }
  }
  if (first == n) return false;
  for (std::size_t i = 0; i < first; ++i) values[i] = values[first];
  std::size_t prev = first;
  for (std::size_t i = first + 1; i < n; ++i) {
    if (!valid[i]) continue;
    if (i > prev + 1) {
      const double a = values[prev];
      const double b = values[i];
      const double span = static_cast<double>(i - prev);
      for (std::size_t k = prev + 1; k < i; ++k)
        values[k] = a + (b - a) * (static_cast<double>(k - prev) / span);
    }
    prev = i;
  }
  for (std::size_t i = prev + 1; i < n; ++i) values[i] = values[prev];
  return true;
}

GapFilled fill_mocap_gaps(const Tensor& frames, std::span<const std::uint8_t> validity) {
  require_rank(frames, 3, "fill_mocap_gaps");
  if (frames.dim(0) != kMocapJoints || frames.dim(1) != kMocapCoords) {
    throw DimensionError("fill_mocap_gaps: expected [17x3xN], got " + shape_string(frames.shape()));
  }
  const std::size_t n = frames.dim(2);
  if (validity.size() != kMocapJoints * n) {
    throw DimensionError("fill_mocap_gaps: validity mask must be [17x" + std::to_string(n) + "]");
  }
  GapFilled out{frames, std::vector<std::uint8_t>(validity.begin(), validity.end())};
  for (std::size_t j = 0; j < kMocapJoints; ++j) {
    const auto mask = std::span<const std::uint8_t>(out.validity).subspan(j * n, n);
    for (std::size_t k = 0; k < kMocapCoords; ++k) {
      auto track = out.joints.data().subspan((j * kMocapCoords + k) * n, n);
      if (!fill_gaps_linear(track, mask)) std::fill(track.begin(), track.end(), 0.0);
    }
  }
  return out;
}

TextSnippet truncate_text(std::span<const int> tokens, std::string raw_text) {
  const std::size_t keep = std::min(tokens.size(), kMaxTextTokens);
  return TextSnippet{std::vector<int>(tokens.begin(), tokens.begin() + keep), std::move(raw_text)};
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocabulary::Vocabulary() { add(std::string(kUnknownToken)); }

void Vocabulary::add(std::string word) {
  if (index_.count(word)) return;
  index_.emplace(word, static_cast<int>(words_.size()));
  words_.push_back(std::move(word));
}

Vocabulary Vocabulary::from_words(std::span<const std::string> words) {
  Vocabulary v;
  for (const auto& w : words) {
    for (auto& piece : split_words(w)) v.add(std::move(piece));
  }
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open vocabulary file " + path);
  std::string line;
  if (!std::getline(in, line) || line != kUnknownToken) {
    throw FormatError("vocabulary " + path + " must start with " + std::string(kUnknownToken));
  }
  Vocabulary v;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (v.index_.count(line)) throw FormatError("duplicate vocabulary word '" + line + "'");
    v.add(line);
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write vocabulary file " + path);
  for (const auto& w : words_) out << w << '\n';
}

int Vocabulary::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnknownId : it->second;
}

std::vector<int> WhitespaceTokenizer::tokenize(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab_.id(w));
  return ids;
}

TextSnippet encode_text(const Tokenizer& tokenizer, std::string_view text) {
  const auto ids = tokenizer.tokenize(text);
  return truncate_text(ids, std::string(text));
}

ChannelStats compute_channel_stats(std::span<const Tensor> windows) {
  if (windows.empty()) throw InsufficientDataError("compute_channel_stats: no windows");
  const std::size_t c = windows[0].dim(0);
  for (const auto& w : windows) {
    if (w.rank() != 2 || w.dim(0) != c) {
      throw DimensionError("compute_channel_stats: inconsistent window shape " +
                           shape_string(w.shape()));
    }
  }
  ChannelStats stats{std::vector<double>(c), std::vector<double>(c)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    // Shifted-data accumulation: a constant channel yields its value as the
    // exact mean and an exact zero variance.
    const double shift = windows[0](ch, 0);
    double s = 0.0, s2 = 0.0, count = 0.0;
    for (const auto& w : windows) {
      for (double v : w.row(ch)) {
        const double d = v - shift;
        s += d;
        s2 += d * d;
      }
      count += static_cast<double>(w.dim(1));
    }
    const double mean_d = s / count;
    stats.mean[ch] = shift + mean_d;
    stats.stddev[ch] = std::sqrt(std::max(0.0, s2 / count - mean_d * mean_d));
  }
  return stats;
}

Tensor standardize_channels(const Tensor& window, const ChannelStats& stats) {
  require_rank(window, 2, "standardize_channels");
  if (window.dim(0) != stats.channels()) {
    throw DimensionError("standardize_channels: " + std::to_string(stats.channels()) +
                         "-channel stats for window " + shape_string(window.shape()));
  }
  Tensor out = window;
  for (std::size_t ch = 0; ch < window.dim(0); ++ch) {
    const double sd = std::max(stats.stddev[ch], 1e-8);
    for (auto& v : out.row(ch)) v = (v - stats.mean[ch]) / sd;
  }
  return out;
}

}  // namespace aura
