#include "aura/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "aura/error.hpp"
#include "aura/rng.hpp"

namespace aura {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRawImuRateHz = 1000.0;
constexpr std::array<double, 3> kTempoFactor{0.85, 1.0, 1.15};
constexpr std::array<double, 3> kIntensityFactor{0.6, 1.0, 1.5};

struct ImuChannelProto {
  double dc, a1, f1, p1, a2, f2, p2;
};

struct ClassProto {
  std::array<ImuChannelProto, kImuChannels> imu;
  // Per joint-coordinate sway: amplitude, frequency, phase.
  std::vector<std::array<double, 3>> mocap;
  std::vector<double> video;
};

ClassProto make_class(std::uint64_t seed, std::size_t c, std::size_t dim) {
  Rng rng(mix_seed(seed, 1000 + c));
  ClassProto p;
  for (auto& ch : p.imu) {
    ch.dc = rng.uniform(-1.0, 1.0);
    ch.a1 = rng.uniform(0.5, 1.5);
    ch.f1 = rng.uniform(0.5, 3.0);
    ch.p1 = rng.uniform(0.0, kTwoPi);
    ch.a2 = rng.uniform(0.1, 0.5);
    ch.f2 = rng.uniform(3.0, 8.0);
    ch.p2 = rng.uniform(0.0, kTwoPi);
  }
  p.mocap.resize(kMocapChannels);
  for (std::size_t i = 0; i < kMocapChannels; ++i) {
    // Limb sway shares its base frequency with one IMU channel so the two
    // modalities carry common structure.
    p.mocap[i] = {rng.uniform(0.02, 0.3), p.imu[i % kImuChannels].f1, rng.uniform(0.0, kTwoPi)};
  }
  p.video.resize(dim);
  for (auto& v : p.video) v = rng.normal();
  return p;
}

std::string source_id_for(std::size_t c, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn-c%02zu-%04zu", c, i);
  return buf;
}

}  // namespace

const std::vector<std::string>& ego_exo_labels() {
  static const std::vector<std::string> labels{"Bike Repair", "Soccer",        "Cooking",
                                               "Health",      "Music",         "Rock Climbing",
                                               "Basketball",  "Dance"};
  return labels;
}

std::vector<std::string> synthetic_labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < n; ++c) {
    out.push_back(c < ego_exo_labels().size() ? ego_exo_labels()[c]
                                              : "activity " + std::to_string(c));
  }
  return out;
}

const std::vector<std::string>& tempo_words() {
  static const std::vector<std::string> w{"slow", "steady", "fast"};
  return w;
}

const std::vector<std::string>& intensity_words() {
  static const std::vector<std::string> w{"light", "moderate", "vigorous"};
  return w;
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw ConfigError("synthetic: n_classes must be at least 2");
  if (spec.pairs_per_class < 1) throw ConfigError("synthetic: pairs_per_class must be positive");
  if (!(spec.noise_level >= 0.0 && spec.noise_level <= 1.0)) {
    throw ConfigError("synthetic: noise_level must lie in [0, 1]");
  }
  if (spec.embedding_dim < 1) throw ConfigError("synthetic: embedding_dim must be positive");

  Dataset ds;
  ds.name = "synthetic";
  ds.labels = synthetic_labels(spec.n_classes);
  ds.embedding_dim = spec.embedding_dim;
  std::vector<std::string> words;
  for (const auto& l : ds.labels)
    for (auto& w : split_words(l)) words.push_back(std::move(w));
  words.insert(words.end(), tempo_words().begin(), tempo_words().end());
  words.insert(words.end(), intensity_words().begin(), intensity_words().end());
  ds.vocabulary = Vocabulary::from_words(words);
  const WhitespaceTokenizer tokenizer(ds.vocabulary);

  // Shared skeleton rest pose and attribute directions for video embeddings.
  Rng shared(mix_seed(spec.seed, 1));
  std::vector<double> rest(kMocapChannels);
  for (auto& v : rest) v = shared.uniform(-1.0, 1.0);
  std::array<std::vector<double>, 3> tempo_dir, intensity_dir;
  for (auto& d : tempo_dir) {
    d.resize(spec.embedding_dim);
    for (auto& v : d) v = shared.normal();
  }
  for (auto& d : intensity_dir) {
    d.resize(spec.embedding_dim);
    for (auto& v : d) v = shared.normal();
  }

  const double noise = spec.noise_level;
  const std::size_t raw_len = static_cast<std::size_t>(kWindowSeconds * kRawImuRateHz);
  std::vector<std::pair<std::string, std::string>> groups;

  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const ClassProto proto = make_class(spec.seed, c, spec.embedding_dim);
    for (std::size_t i = 0; i < spec.pairs_per_class; ++i) {
      Rng rng(mix_seed(mix_seed(spec.seed, 2000 + c), i));
      const auto tempo = static_cast<std::size_t>(rng.below(3));
      const auto intensity = static_cast<std::size_t>(rng.below(3));
      const double tf = kTempoFactor[tempo];
      const double inf = kIntensityFactor[intensity];
      const double jitter = rng.uniform(-std::numbers::pi / 4, std::numbers::pi / 4);

      DatasetRecord r;
      r.source_id = source_id_for(c, i);
      r.offset_s = 0.0;
      r.label = ds.labels[c];

      // IMU is synthesized at the headset's native 1000 Hz and decimated.
      Tensor raw({kImuChannels, raw_len});
      for (std::size_t ch = 0; ch < kImuChannels; ++ch) {
        const auto& p = proto.imu[ch];
        for (std::size_t j = 0; j < raw_len; ++j) {
          const double t = static_cast<double>(j) / kRawImuRateHz;
          raw(ch, j) = p.dc +
                       inf * (p.a1 * std::sin(kTwoPi * p.f1 * tf * t + p.p1 + jitter) +
                              p.a2 * std::sin(kTwoPi * p.f2 * tf * t + p.p2 + jitter)) +
                       noise * rng.normal();
        }
      }
      r.imu = quantize_f32(resample_linear(TimeSeries::make(std::move(raw), kRawImuRateHz),
                                           kImuRateHz).samples);

      Tensor frames({kMocapJoints, kMocapCoords, kMocapFrames});
      std::vector<std::uint8_t> valid(kMocapJoints * kMocapFrames, 1);
      for (std::size_t ch = 0; ch < kMocapChannels; ++ch) {
        const auto& [amp, freq, phase] = proto.mocap[ch];
        for (std::size_t f = 0; f < kMocapFrames; ++f) {
          const double t = static_cast<double>(f) / kMocapRateHz;
          frames[ch * kMocapFrames + f] = rest[ch] +
                                          inf * amp * std::sin(kTwoPi * freq * tf * t + phase + jitter) +
                                          0.05 * noise * rng.normal();
        }
      }
      for (std::size_t j = 0; j < kMocapJoints; ++j) {
        const double u = rng.uniform();
        if (u < 0.02) {
          for (std::size_t f = 0; f < kMocapFrames; ++f) valid[j * kMocapFrames + f] = 0;
        } else if (u < 0.12) {
          const auto len = 1 + static_cast<std::size_t>(rng.below(5));
          const auto start = static_cast<std::size_t>(rng.below(kMocapFrames - len + 1));
          for (std::size_t f = start; f < start + len; ++f) valid[j * kMocapFrames + f] = 0;
        }
      }
      for (std::size_t j = 0; j < kMocapJoints; ++j)
        for (std::size_t k = 0; k < kMocapCoords; ++k)
          for (std::size_t f = 0; f < kMocapFrames; ++f)
            if (!valid[j * kMocapFrames + f]) frames[(j * kMocapCoords + k) * kMocapFrames + f] = std::nan("");
      GapFilled filled = fill_mocap_gaps(frames, valid);
      r.mocap = quantize_f32(filled.joints);
      r.mocap_valid = std::move(filled.validity);

      const std::string text =
          ds.labels[c] + " " + tempo_words()[tempo] + " " + intensity_words()[intensity];
      r.text = encode_text(tokenizer, text);

      Tensor video({spec.embedding_dim});
      for (std::size_t d = 0; d < spec.embedding_dim; ++d) {
        video[d] = proto.video[d] + 0.5 * tempo_dir[tempo][d] + 0.5 * intensity_dir[intensity][d] +
                   0.5 * noise * rng.normal();
      }
      r.video_emb = quantize_f32(l2_normalize(video));

      groups.emplace_back(r.source_id, *r.label);
      ds.records.push_back(std::move(r));
    }
  }
  const auto splits = assign_splits(groups);
  for (auto& r : ds.records) r.split = splits.at(r.source_id);
  sort_records(ds.records);
  ds.validate();
  return ds;
}

}  // namespace aura
