#include "aura/ingest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "aura/error.hpp"
#include "aura/log.hpp"

namespace aura {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// 0-based column indices of the chest IMU block.
constexpr std::size_t kChestAcc16 = 21;
constexpr std::size_t kChestAcc6 = 24;
constexpr std::size_t kChestGyro = 27;
constexpr std::size_t kMinColumns = kChestGyro + 3;
constexpr double kPamapRateHz = 100.0;

struct Row {
  double time;
  int activity;
  std::array<double, kImuChannels> values;
};

struct Segment {
  int activity;
  std::vector<Row> rows;
};

std::vector<Segment> read_segments(std::istream& in, const Pamap2Options& opt, const std::string& what) {
  const std::size_t acc = opt.accel == Pamap2Accel::range16g ? kChestAcc16 : kChestAcc6;
  std::vector<Segment> segments;
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> cols;
  while (std::getline(in, line)) {
    ++line_no;
    cols.clear();
    const char* p = line.c_str();
    while (true) {
      while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
      if (*p == '\0') break;
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) {
        throw FormatError(what + " line " + std::to_string(line_no) + ": unparsable value");
      }
      cols.push_back(v);
      p = end;
    }
    if (cols.empty()) continue;
    if (cols.size() < kMinColumns) {
      throw FormatError(what + " line " + std::to_string(line_no) + ": missing columns (" +
                        std::to_string(cols.size()) + " present, chest IMU needs " +
                        std::to_string(kMinColumns) + ")");
    }
    if (!std::isfinite(cols[1]) || cols[1] != std::floor(cols[1])) {
      throw FormatError(what + " line " + std::to_string(line_no) + ": invalid activity id");
    }
    const int activity = static_cast<int>(cols[1]);
    if (activity == 0) continue;  // transient between activities
    if (!pamap2_activities().count(activity)) {
      throw FormatError(what + " line " + std::to_string(line_no) + ": unknown activity id " +
                        std::to_string(activity));
    }
    Row row{cols[0], activity, {}};
    for (std::size_t k = 0; k < 3; ++k) {
      row.values[k] = cols[acc + k];
      row.values[3 + k] = cols[kChestGyro + k];
    }
    const bool extend = !segments.empty() && segments.back().activity == activity &&
                        row.time > segments.back().rows.back().time &&
                        row.time - segments.back().rows.back().time <= opt.max_step_s;
    if (!extend) segments.push_back({activity, {}});
    segments.back().rows.push_back(row);
  }
  return segments;
}

struct Counters {
  std::size_t short_segments = 0;
  std::size_t dead_segments = 0;
};

void segment_records(const Segment& seg, const std::string& source_id, const Pamap2Options& opt,
                     Counters& counters, std::vector<DatasetRecord>& out) {
  const std::size_t n = seg.rows.size();
  const double window_s = opt.window_s;
  // After upsampling the segment covers 2n samples at 200 Hz.
  if (n < 2 || static_cast<double>(2 * n) < window_s * kImuRateHz) {
    ++counters.short_segments;
    return;
  }
  Tensor samples({kImuChannels, n});
  std::vector<std::uint8_t> valid(n);
  for (std::size_t ch = 0; ch < kImuChannels; ++ch) {
    auto track = samples.data().subspan(ch * n, n);
    for (std::size_t j = 0; j < n; ++j) {
      const double v = seg.rows[j].values[ch];
      valid[j] = std::isfinite(v);
      track[j] = valid[j] ? v : 0.0;
    }
    if (!fill_gaps_linear(track, valid)) {
      ++counters.dead_segments;
      return;
    }
  }
  const TimeSeries up = resample_linear(TimeSeries::make(std::move(samples), kPamapRateHz), kImuRateHz);
  // The interpolation grid ends at the last source sample; hold it so the
  // series spans the segment's full duration (n / 100 s).
  const std::size_t len = 2 * n;
  Tensor held({kImuChannels, len});
  for (std::size_t ch = 0; ch < kImuChannels; ++ch) {
    for (std::size_t j = 0; j < len; ++j) {
      held(ch, j) = up.samples(ch, std::min(j, up.length() - 1));
    }
  }
  for (auto& w : slide_windows(TimeSeries::make(std::move(held), kImuRateHz), window_s, opt.stride_s)) {
    DatasetRecord r;
    r.source_id = source_id;
    r.offset_s = w.offset_s;
    r.label = pamap2_activities().at(seg.activity);
    r.imu = quantize_f32(w.samples);
    out.push_back(std::move(r));
  }
}

Dataset finish_pamap2(std::vector<DatasetRecord> records, Counters counters) {
  if (counters.short_segments) {
    log::warn("pamap2: skipped " + std::to_string(counters.short_segments) +
              " segment(s) shorter than one window");
  }
  if (counters.dead_segments) {
    log::warn("pamap2: skipped " + std::to_string(counters.dead_segments) +
              " segment(s) with a channel that never reports a value");
  }
  Dataset ds;
  ds.name = "pamap2";
  ds.labels = pamap2_labels();
  std::vector<std::string> words;
  for (const auto& l : ds.labels)
    for (auto& w : split_words(l)) words.push_back(std::move(w));
  ds.vocabulary = Vocabulary::from_words(words);
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& r : records) groups.emplace_back(r.source_id, *r.label);
  const auto splits = assign_splits(groups);
  for (auto& r : records) r.split = splits.at(r.source_id);
  sort_records(records);
  ds.records = std::move(records);
  ds.validate();
  return ds;
}

std::string segment_id(const std::string& subject, std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "-s%03zu", k);
  return subject + buf;
}

}  // namespace

const std::map<int, std::string>& pamap2_activities() {
  static const std::map<int, std::string> m{
      {1, "lying"},           {2, "sitting"},           {3, "standing"},
      {4, "walking"},         {5, "running"},           {6, "cycling"},
      {7, "Nordic walking"},  {9, "watching TV"},       {10, "computer work"},
      {11, "car driving"},    {12, "ascending stairs"}, {13, "descending stairs"},
      {16, "vacuum cleaning"}, {17, "ironing"},         {18, "folding laundry"},
      {19, "house cleaning"}, {20, "playing soccer"},   {24, "rope jumping"}};
  return m;
}

std::vector<std::string> pamap2_labels() {
  std::vector<std::string> out;
  for (const auto& [id, name] : pamap2_activities()) out.push_back(name);
  return out;
}

Dataset ingest_pamap2(std::istream& rows, const Pamap2Options& options) {
  Counters counters;
  std::vector<DatasetRecord> records;
  const auto segments = read_segments(rows, options, options.subject);
  for (std::size_t k = 0; k < segments.size(); ++k) {
    segment_records(segments[k], segment_id(options.subject, k), options, counters, records);
  }
  return finish_pamap2(std::move(records), counters);
}

Dataset ingest_pamap2(const std::vector<fs::path>& files, const Pamap2Options& options) {
  Counters counters;
  std::vector<DatasetRecord> records;
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    const std::string subject = path.stem().string();
    const auto segments = read_segments(in, options, path.string());
    for (std::size_t k = 0; k < segments.size(); ++k) {
      segment_records(segments[k], segment_id(subject, k), options, counters, records);
    }
  }
  return finish_pamap2(std::move(records), counters);
}

Dataset ingest_windows(const fs::path& dir, std::string name) {
  std::ifstream index(dir / "index.jsonl");
  if (!index) throw FormatError("no index.jsonl in " + dir.string());
  struct Pending {
    DatasetRecord record;
    std::optional<std::string> text;
    bool has_split = false;
  };
  std::vector<Pending> pending;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Pending p;
    DatasetRecord& r = p.record;
    try {
      const json j = json::parse(line);
      r.source_id = j.at("source_id").get<std::string>();
      r.offset_s = j.value("offset_s", 0.0);
      if (j.contains("label")) r.label = j.at("label").get<std::string>();
      if (j.contains("text")) p.text = j.at("text").get<std::string>();
      if (j.contains("split")) {
        r.split = parse_split(j.at("split").get<std::string>());
        p.has_split = true;
      }
      if (j.contains("imu")) r.imu = load_blob(dir / j.at("imu").get<std::string>());
      if (j.contains("mocap")) {
        const Tensor frames = load_blob(dir / j.at("mocap").get<std::string>());
        std::vector<std::uint8_t> valid(kMocapJoints * kMocapFrames, 1);
        if (j.contains("mocap_valid")) {
          const Tensor mask = load_blob(dir / j.at("mocap_valid").get<std::string>());
          if (mask.size() != valid.size()) throw FormatError("mocap_valid must hold 17x50 entries");
          for (std::size_t i = 0; i < valid.size(); ++i) valid[i] = mask[i] != 0.0;
        }
        if (frames.shape() != Shape{kMocapJoints, kMocapCoords, kMocapFrames}) {
          throw FormatError("mocap has shape " + shape_string(frames.shape()) + ", expected [17x3x50]");
        }
        GapFilled filled = fill_mocap_gaps(frames, valid);
        r.mocap = quantize_f32(filled.joints);
        r.mocap_valid = std::move(filled.validity);
      }
      if (j.contains("video_emb")) {
        r.video_emb = load_blob(dir / j.at("video_emb").get<std::string>());
        if (r.video_emb->rank() != 1) throw FormatError("video_emb must be a vector");
        if (dim && *dim != r.video_emb->size()) throw FormatError("video_emb widths disagree");
        dim = r.video_emb->size();
      }
    } catch (const json::exception& e) {
      throw FormatError("index.jsonl line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("index.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
    pending.push_back(std::move(p));
  }

  Dataset ds;
  ds.name = std::move(name);
  ds.embedding_dim = dim.value_or(512);
  std::set<std::string> labels;
  std::vector<std::string> words;
  for (const auto& p : pending) {
    if (p.record.label) labels.insert(*p.record.label);
  }
  ds.labels.assign(labels.begin(), labels.end());
  for (const auto& l : ds.labels)
    for (auto& w : split_words(l)) words.push_back(std::move(w));
  for (const auto& p : pending)
    if (p.text)
      for (auto& w : split_words(*p.text)) words.push_back(std::move(w));
  ds.vocabulary = Vocabulary::from_words(words);
  const WhitespaceTokenizer tokenizer(ds.vocabulary);

  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& p : pending) {
    if (!p.has_split) groups.emplace_back(p.record.source_id, p.record.label.value_or(""));
  }
  const auto splits = assign_splits(groups);
  for (auto& p : pending) {
    if (p.text) p.record.text = encode_text(tokenizer, *p.text);
    if (!p.has_split) p.record.split = splits.at(p.record.source_id);
    ds.records.push_back(std::move(p.record));
  }
  sort_records(ds.records);
  ds.validate();
  return ds;
}

}  // namespace aura
