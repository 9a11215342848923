#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "aura/data_io.hpp"
#include "aura/error.hpp"
#include "aura/ingest.hpp"
#include "aura/log.hpp"
#include "aura/rng.hpp"
#include "aura/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace aura;
using namespace aura::testing;
namespace fs = std::filesystem;

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("blob header for a 6x1000 tensor holds dims and a 24000-byte payload") {
  Rng rng(1);
  std::ostringstream out;
  write_blob(out, random_f32({6, 1000}, rng));
  const std::string b = out.str();
  REQUIRE(b.size() == 16 + 2 * 8 + 24000);
  CHECK(b.substr(0, 4) == "AURA");
  auto u32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + k])) << (8 * k);
    return v;
  };
  auto u64 = [&](std::size_t off) {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[off + k])) << (8 * k);
    return v;
  };
  CHECK(u32(4) == kBlobVersion);
  CHECK(u32(8) == 2);
  CHECK(u32(12) == 0);
  CHECK(u64(16) == 6);
  CHECK(u64(24) == 1000);
  std::istringstream in(b);
  CHECK(read_blob(in).shape() == Shape{6, 1000});
}

TEST_CASE("float32 payload is little-endian IEEE-754") {
  std::ostringstream out;
  write_blob(out, Tensor::vector({1.0}));
  const std::string b = out.str();
  // 1.0f = 0x3f800000
  CHECK(static_cast<unsigned char>(b[24]) == 0x00);
  CHECK(static_cast<unsigned char>(b[25]) == 0x00);
  CHECK(static_cast<unsigned char>(b[26]) == 0x80);
  CHECK(static_cast<unsigned char>(b[27]) == 0x3f);
}

TEST_CASE("corrupted blobs are rejected with a named error") {
  Rng rng(2);
  std::ostringstream out;
  write_blob(out, random_f32({3, 4}, rng));
  const std::string good = out.str();

  std::string bad = good;
  bad[0] = 'X';
  std::istringstream in1(bad);
  REQUIRE_THROWS_AS(read_blob(in1), FormatError);
  std::istringstream in1b(bad);
  REQUIRE_THROWS_WITH(read_blob(in1b), Catch::Matchers::ContainsSubstring("magic"));

  bad = good;
  bad[4] = 9;
  std::istringstream in2(bad);
  REQUIRE_THROWS_WITH(read_blob(in2), Catch::Matchers::ContainsSubstring("version"));

  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, std::size_t{20}, good.size() - 1}) {
    std::istringstream in3(good.substr(0, cut));
    REQUIRE_THROWS_WITH(read_blob(in3), Catch::Matchers::ContainsSubstring("truncated"));
  }
}

TEST_CASE("float64 blobs round-trip exactly") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor t = testing::random_tensor({1 + rng.below(5), 1 + rng.below(5)}, rng);
    std::ostringstream out;
    write_blob(out, t, BlobType::f64);
    std::istringstream in(out.str());
    CHECK(read_blob(in) == t);
  }
}

TEST_CASE("dataset read after write is the identity, and blobs are bit-identical") {
  TempDir tmp("ds");
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const Dataset ds = random_dataset(rng);
    bool unique = true;
    try {
      ds.validate();
    } catch (const FormatError&) {
      unique = false;  // duplicate random key; regenerate
    }
    if (!unique) continue;
    const fs::path a = tmp.path / "a";
    const fs::path b = tmp.path / "b";
    fs::remove_all(a);
    fs::remove_all(b);
    write_dataset(ds, a);
    const Dataset back = read_dataset(a);
    REQUIRE(back.records == ds.records);
    REQUIRE(back.labels == ds.labels);
    REQUIRE(back.name == ds.name);
    REQUIRE(back.embedding_dim == ds.embedding_dim);
    REQUIRE(back.vocabulary.words() == ds.vocabulary.words());
    if (trial % 50 == 0) {
      write_dataset(back, b);
      for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        REQUIRE(bytes_of(e.path()) == bytes_of(b / fs::relative(e.path(), a)));
      }
    }
  }
}

TEST_CASE("dataset validation rejects contradictions") {
  Rng rng(5);
  Dataset ds;
  ds.labels = {"a"};
  DatasetRecord r;
  r.source_id = "x";
  r.imu = random_f32({6, 999}, rng);
  ds.records.push_back(r);
  REQUIRE_THROWS_AS(ds.validate(), FormatError);

  ds.records[0].imu = random_f32({6, 1000}, rng);
  ds.records.push_back(ds.records[0]);
  REQUIRE_THROWS_WITH(ds.validate(), Catch::Matchers::ContainsSubstring("duplicate"));

  ds.records[1].offset_s = 5.0;
  ds.records[1].split = Split::test;
  REQUIRE_THROWS_WITH(ds.validate(), Catch::Matchers::ContainsSubstring("spans splits"));

  ds.records.pop_back();
  ds.records[0].label = "b";
  REQUIRE_THROWS_WITH(ds.validate(), Catch::Matchers::ContainsSubstring("label"));
}

TEST_CASE("a blob whose shape contradicts the modality is rejected on read") {
  TempDir tmp("shape");
  Rng rng(6);
  Dataset ds;
  DatasetRecord r;
  r.source_id = "rec";
  r.imu = random_f32({6, 1000}, rng);
  ds.records.push_back(r);
  write_dataset(ds, tmp.path);
  save_blob(tmp.path / "blobs" / "rec_0.imu.bin", random_f32({6, 500}, rng));
  REQUIRE_THROWS_AS(read_dataset(tmp.path), FormatError);
  save_blob(tmp.path / "blobs" / "rec_0.imu.bin", random_f32({6, 1000}, rng));
  CHECK_NOTHROW(read_dataset(tmp.path));
  fs::remove(tmp.path / "blobs" / "rec_0.imu.bin");
  REQUIRE_THROWS_AS(read_dataset(tmp.path), FormatError);
}

TEST_CASE("checkpoint read after write is the identity") {
  Rng rng(7);
  TempDir tmp("ckpt");
  for (int trial = 0; trial < 1000; ++trial) {
    Checkpoint c;
    c.metadata = "{\"trial\":" + std::to_string(trial) + "}";
    const std::size_t n = rng.below(5);
    for (std::size_t i = 0; i < n; ++i) {
      c.tensors["t" + std::to_string(rng.below(100))] =
          testing::random_tensor({1 + rng.below(4), 1 + rng.below(4)}, rng);
    }
    std::stringstream s;
    write_checkpoint(c, s);
    REQUIRE(read_checkpoint(s) == c);
    if (trial % 100 == 0) {
      write_checkpoint(c, tmp.path / "c.bin");
      REQUIRE(read_checkpoint(tmp.path / "c.bin") == c);
      const std::string first = bytes_of(tmp.path / "c.bin");
      write_checkpoint(read_checkpoint(tmp.path / "c.bin"), tmp.path / "d.bin");
      REQUIRE(bytes_of(tmp.path / "d.bin") == first);
    }
  }
  std::stringstream bad("AURX");
  REQUIRE_THROWS_WITH(read_checkpoint(bad), Catch::Matchers::ContainsSubstring("magic"));
}

TEST_CASE("split rule: floor 80% train per group, remainder alternates val/test") {
  std::vector<std::pair<std::string, std::string>> ids;
  for (int c = 0; c < 8; ++c)
    for (int i = 0; i < 64; ++i) ids.emplace_back("c" + std::to_string(c) + "-" + std::to_string(100 + i), "g" + std::to_string(c));
  const auto splits = assign_splits(ids);
  std::map<Split, int> counts;
  for (const auto& [id, s] : splits) counts[s]++;
  CHECK(counts[Split::train] == 408);  // 8 · floor(0.8 · 64)
  CHECK(counts[Split::val] == 52);
  CHECK(counts[Split::test] == 52);
  // Within a group the lowest ids train.
  CHECK(splits.at("c0-100") == Split::train);
  CHECK(splits.at("c0-150") == Split::train);
  CHECK(splits.at("c0-151") == Split::val);
  CHECK(splits.at("c0-152") == Split::test);
}

TEST_CASE("synthetic spec (8 classes, 64 per class, seed 0) splits 408/52/52 over 512 pairs") {
  SyntheticSpec spec;
  spec.pairs_per_class = 64;
  const Dataset ds = gen_synthetic(spec);
  REQUIRE(ds.records.size() == 512);
  CHECK(ds.split(Split::train).size() == 408);
  CHECK(ds.split(Split::val).size() == 52);
  CHECK(ds.split(Split::test).size() == 52);
  CHECK(ds.labels == ego_exo_labels());
  for (const auto& r : ds.records) {
    REQUIRE(r.imu);
    REQUIRE(r.mocap);
    REQUIRE(r.text);
    REQUIRE(r.video_emb);
    REQUIRE(r.label);
    CHECK(r.imu->all_finite());
    CHECK(r.mocap->all_finite());
    CHECK(std::abs(l2_norm(r.video_emb->data()) - 1.0) < 1e-6);
    CHECK_FALSE(r.text->token_ids.empty());
  }
}

TEST_CASE("synthetic generation is deterministic in the seed") {
  SyntheticSpec spec;
  spec.pairs_per_class = 6;
  const Dataset a = gen_synthetic(spec);
  const Dataset b = gen_synthetic(spec);
  CHECK(a.records == b.records);
  spec.seed = 1;
  const Dataset c = gen_synthetic(spec);
  CHECK_FALSE(a.records == c.records);
  TempDir tmp("syn");
  write_dataset(a, tmp.path);
  CHECK(read_dataset(tmp.path).records == a.records);
}

TEST_CASE("synthetic splits are disjoint by source_id") {
  for (std::uint64_t seed : {0, 1, 2}) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.n_classes = 3 + seed;
    spec.pairs_per_class = 7 + 3 * seed;
    const Dataset ds = gen_synthetic(spec);
    std::map<std::string, Split> seen;
    for (const auto& r : ds.records) {
      const auto [it, fresh] = seen.emplace(r.source_id, r.split);
      CHECK((fresh || it->second == r.split));
    }
  }
}

TEST_CASE("noise 0: within-class IMU cosine exceeds between-class on average") {
  SyntheticSpec spec;
  spec.noise_level = 0.0;
  spec.pairs_per_class = 16;
  const Dataset ds = gen_synthetic(spec);
  std::vector<Tensor> windows;
  for (const auto& r : ds.records) windows.push_back(*r.imu);
  const ChannelStats stats = compute_channel_stats(windows);
  std::vector<Tensor> z;
  for (const auto& w : windows) z.push_back(standardize_channels(w, stats));
  double within = 0, between = 0;
  std::size_t nw = 0, nb = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i + 1; j < z.size(); ++j) {
      const double c = cosine(z[i].data(), z[j].data());
      if (ds.records[i].label == ds.records[j].label) {
        within += c;
        ++nw;
      } else {
        between += c;
        ++nb;
      }
    }
  }
  within /= static_cast<double>(nw);
  between /= static_cast<double>(nb);
  INFO("within " << within << " between " << between);
  CHECK(within > between);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec spec;
  spec.n_classes = 1;
  CHECK_THROWS_AS(gen_synthetic(spec), ConfigError);
  spec.n_classes = 2;
  spec.noise_level = 1.5;
  CHECK_THROWS_AS(gen_synthetic(spec), ConfigError);
  spec.noise_level = 1.0;
  spec.pairs_per_class = 2;
  CHECK_NOTHROW(gen_synthetic(spec));
  CHECK(synthetic_labels(10)[9] == "activity 9");
}

namespace {

std::string pamap_row(double t, int activity, const std::array<double, 6>& v) {
  std::ostringstream s;
  s.precision(17);
  s << t << ' ' << activity << " NaN";
  for (int c = 4; c <= 54; ++c) {
    double x = 0.0;
    if (c >= 22 && c <= 24) x = v[c - 22];
    if (c >= 25 && c <= 27) x = 100.0 + v[c - 25];
    if (c >= 28 && c <= 30) x = v[3 + c - 28];
    s << ' ' << x;
  }
  return s.str();
}

}  // namespace

TEST_CASE("activity id to label map covers exactly the eighteen names") {
  const std::set<std::string> expected{"lying", "sitting", "standing", "walking", "running", "cycling",
                                       "Nordic walking", "watching TV", "computer work", "car driving",
                                       "ascending stairs", "descending stairs", "vacuum cleaning", "ironing",
                                       "folding laundry", "house cleaning", "playing soccer", "rope jumping"};
  const auto labels = pamap2_labels();
  CHECK(labels.size() == 18);
  CHECK(std::set<std::string>(labels.begin(), labels.end()) == expected);
}

TEST_CASE("a 10 s PAMAP2 segment at 100 Hz gives 2000 samples and two windows") {
  std::ostringstream rows;
  for (int j = 0; j < 1000; ++j) {
    const double t = j * 0.01;
    rows << pamap_row(5.0 + t, 4, {t, 2 * t, -t, 1.0, 0.5, j % 2 ? 1.0 : -1.0}) << '\n';
  }
  std::istringstream in(rows.str());
  const Dataset ds = ingest_pamap2(in);
  REQUIRE(ds.records.size() == 2);
  CHECK(ds.records[0].offset_s == 0.0);
  CHECK(ds.records[1].offset_s == 5.0);
  CHECK(ds.records[0].label == "walking");
  const Tensor& w = *ds.records[0].imu;
  CHECK(w.shape() == Shape{6, 1000});
  // Channel 0 is the 16 g accelerometer x; sample 2k reproduces row k exactly.
  CHECK(w(0, 10) == static_cast<double>(static_cast<float>(0.05)));
  CHECK(w(0, 11) == Catch::Approx(0.055).epsilon(1e-6));
  CHECK(w(3, 0) == 1.0);

  Pamap2Options six;
  six.accel = Pamap2Accel::range6g;
  std::istringstream in6(rows.str());
  CHECK((*ingest_pamap2(in6, six).records[0].imu)(0, 0) == 100.0);
}

TEST_CASE("PAMAP2 dropout markers are gap-filled before windowing") {
  std::ostringstream rows;
  for (int j = 0; j < 500; ++j) {
    std::array<double, 6> v{static_cast<double>(j), 0, 0, 0, 0, 0};
    if (j >= 100 && j < 110) v[0] = std::nan("");
    rows << pamap_row(j * 0.01, 1, v) << '\n';
  }
  std::istringstream in(rows.str());
  const Dataset ds = ingest_pamap2(in);
  REQUIRE(ds.records.size() == 1);
  const Tensor& w = *ds.records[0].imu;
  CHECK(w.all_finite());
  CHECK(w(0, 210) == 105.0);  // interpolated between rows 99 and 110
}

TEST_CASE("PAMAP2 errors and segmentation") {
  std::istringstream unknown("1.0 8 NaN " + std::string(200, ' ') + "\n");
  CHECK_THROWS_AS(ingest_pamap2(unknown), FormatError);
  std::istringstream bad_id(pamap_row(0.0, 8, {}) + "\n");
  CHECK_THROWS_WITH(ingest_pamap2(bad_id), Catch::Matchers::ContainsSubstring("unknown activity id 8"));
  std::istringstream short_row("0.0 1 NaN 1 2 3\n");
  CHECK_THROWS_WITH(ingest_pamap2(short_row), Catch::Matchers::ContainsSubstring("missing columns"));

  // Two activities and transient rows: segments split by activity.
  std::ostringstream rows;
  int j = 0;
  for (; j < 600; ++j) rows << pamap_row(j * 0.01, 2, {}) << '\n';
  for (; j < 700; ++j) rows << pamap_row(j * 0.01, 0, {}) << '\n';
  for (; j < 1300; ++j) rows << pamap_row(j * 0.01, 24, {}) << '\n';
  for (; j < 1400; ++j) rows << pamap_row(j * 0.01, 24, {}) << '\n';
  log::ScopedWarningCapture cap;
  std::istringstream in(rows.str());
  const Dataset ds = ingest_pamap2(in);
  REQUIRE(ds.records.size() == 2);
  CHECK(ds.records[0].source_id != ds.records[1].source_id);
  CHECK(ds.records[0].label == "sitting");
  CHECK(ds.records[1].label == "rope jumping");
}

TEST_CASE("pre-exported windows are ingested with tokenized text") {
  TempDir tmp("win");
  Rng rng(9);
  save_blob(tmp.path / "imu0.bin", random_f32({6, 1000}, rng));
  save_blob(tmp.path / "imu1.bin", random_f32({6, 1000}, rng));
  save_blob(tmp.path / "v0.bin", l2_normalize(testing::random_tensor({8}, rng)));
  {
    std::ofstream idx(tmp.path / "index.jsonl");
    idx << R"({"source_id":"take-a","offset_s":0,"label":"Cooking","text":"C stirs the pot","imu":"imu0.bin","video_emb":"v0.bin"})" "\n";
    idx << R"({"source_id":"take-b","offset_s":5,"label":"Soccer","text":"C kicks","imu":"imu1.bin","split":"test"})" "\n";
  }
  const Dataset ds = ingest_windows(tmp.path);
  REQUIRE(ds.records.size() == 2);
  CHECK(ds.embedding_dim == 8);
  CHECK(ds.records[1].split == Split::test);
  CHECK(ds.records[0].text->token_ids.size() == 4);
  CHECK(ds.vocabulary.word(ds.records[0].text->token_ids[1]) == "stirs");
  {
    std::ofstream idx(tmp.path / "index.jsonl");
    idx << R"({"source_id":"take-a","imu":"v0.bin"})" "\n";
  }
  CHECK_THROWS_AS(ingest_windows(tmp.path), FormatError);
}
