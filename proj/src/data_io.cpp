#include "aura/data_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <cctype>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "aura/error.hpp"

namespace aura {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array<char, 4> kBlobMagic{'A', 'U', 'R', 'A'};
constexpr std::array<char, 4> kCheckpointMagic{'A', 'U', 'R', 'C'};

template <typename T>
void put_le(std::ostream& out, T v) {
  std::array<unsigned char, sizeof(T)> b{};
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b.data()), b.size());
}

template <typename T>
T get_le(std::istream& in, const std::string& what) {
  std::array<unsigned char, sizeof(T)> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) {
    throw FormatError(what + ": truncated header");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_blob(std::ostream& out, const Tensor& t, BlobType type) {
  out.write(kBlobMagic.data(), kBlobMagic.size());
  put_le<std::uint32_t>(out, kBlobVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(type));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  if (type == BlobType::f32) {
    for (double v : t.data()) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      put_le(out, bits);
    }
  } else {
    for (double v : t.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_le(out, bits);
    }
  }
}

Tensor read_blob(std::istream& in, const std::string& what) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw FormatError(what + ": truncated header");
  if (magic != kBlobMagic) throw FormatError(what + ": bad magic, not an AURA blob");
  const auto version = get_le<std::uint32_t>(in, what);
  if (version != kBlobVersion) {
    throw FormatError(what + ": unsupported blob version " + std::to_string(version));
  }
  const auto rank = get_le<std::uint32_t>(in, what);
  const auto type = get_le<std::uint32_t>(in, what);
  if (type > 1) throw FormatError(what + ": unknown element type " + std::to_string(type));
  if (rank == 0 || rank > 8) throw FormatError(what + ": unsupported rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const auto v = get_le<std::uint64_t>(in, what);
    if (v == 0 || v > (1ULL << 32)) throw FormatError(what + ": invalid dimension");
    d = static_cast<std::size_t>(v);
    count *= v;
    if (count > (1ULL << 32)) throw FormatError(what + ": tensor too large");
  }
  std::vector<double> data(count);
  const std::size_t width = type == 0 ? 4 : 8;
  std::vector<unsigned char> bytes(count * width);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw FormatError(what + ": truncated payload, expected " + std::to_string(bytes.size()) +
                      " bytes");
  }
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = bytes.data() + i * width;
    if (type == 0) {
      std::uint32_t bits = 0;
      for (std::size_t k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[k]) << (8 * k);
      float f;
      std::memcpy(&f, &bits, sizeof f);
      data[i] = f;
    } else {
      std::uint64_t bits = 0;
      for (std::size_t k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(p[k]) << (8 * k);
      std::memcpy(&data[i], &bits, sizeof(double));
    }
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_blob(const fs::path& path, const Tensor& t, BlobType type) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  write_blob(out, t, type);
  if (!out) throw FormatError("write failed for " + path.string());
}

Tensor load_blob(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open blob " + path.string());
  Tensor t = read_blob(in, path.string());
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after payload");
  }
  return t;
}

Tensor quantize_f32(const Tensor& t) {
  Tensor q = t;
  for (auto& v : q.data()) v = static_cast<double>(static_cast<float>(v));
  return q;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

long long DatasetRecord::offset_ms() const { return std::llround(offset_s * 1000.0); }

std::string DatasetRecord::blob_stem() const {
  return source_id + "_" + std::to_string(offset_ms());
}

std::vector<const DatasetRecord*> Dataset::split(Split s) const {
  std::vector<const DatasetRecord*> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(&r);
  return out;
}

namespace {

void check_shape(const DatasetRecord& r, const char* modality, const Tensor& t, const Shape& want) {
  if (t.shape() != want) {
    throw FormatError("record " + r.blob_stem() + ": " + modality + " has shape " +
                      shape_string(t.shape()) + ", manifest requires " + shape_string(want));
  }
}

bool valid_source_id(const std::string& id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

}  // namespace

void Dataset::validate() const {
  std::set<std::pair<std::string, long long>> keys;
  std::map<std::string, Split> split_of;
  for (const auto& r : records) {
    if (!valid_source_id(r.source_id)) {
      throw FormatError("invalid source_id '" + r.source_id + "'");
    }
    if (!keys.insert({r.source_id, r.offset_ms()}).second) {
      throw FormatError("duplicate record " + r.blob_stem());
    }
    const auto [it, fresh] = split_of.emplace(r.source_id, r.split);
    if (!fresh && it->second != r.split) {
      throw FormatError("recording " + r.source_id + " spans splits " + to_string(it->second) +
                        " and " + to_string(r.split));
    }
    if (r.imu) check_shape(r, "imu", *r.imu, {kImuChannels, kImuWindowSamples});
    if (r.mocap) {
      check_shape(r, "mocap", *r.mocap, {kMocapJoints, kMocapCoords, kMocapFrames});
      if (!r.mocap_valid || r.mocap_valid->size() != kMocapJoints * kMocapFrames) {
        throw FormatError("record " + r.blob_stem() + ": mocap without a 17x50 validity mask");
      }
    }
    if (r.text && r.text->token_ids.size() > kMaxTextTokens) {
      throw FormatError("record " + r.blob_stem() + ": text exceeds 77 tokens");
    }
    if (r.video_emb) check_shape(r, "video_emb", *r.video_emb, {embedding_dim});
    if (r.label && !labels.empty() &&
        std::find(labels.begin(), labels.end(), *r.label) == labels.end()) {
      throw FormatError("record " + r.blob_stem() + ": label '" + *r.label +
                        "' not in the dataset label set");
    }
  }
}

void sort_records(std::vector<DatasetRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    if (a.source_id != b.source_id) return a.source_id < b.source_id;
    return a.offset_s < b.offset_s;
  });
}

std::map<std::string, Split> assign_splits(
    const std::vector<std::pair<std::string, std::string>>& source_and_group) {
  std::map<std::string, std::set<std::string>> groups;
  std::map<std::string, std::string> group_of;
  for (const auto& [src, group] : source_and_group) {
    const auto [it, fresh] = group_of.emplace(src, group);
    if (!fresh && it->second != group) {
      throw FormatError("source " + src + " belongs to groups '" + it->second + "' and '" + group + "'");
    }
    groups[group].insert(src);
  }
  std::map<std::string, Split> out;
  std::vector<std::string> pool;
  for (const auto& [group, ids] : groups) {
    const std::size_t n_train = ids.size() * 8 / 10;
    std::size_t i = 0;
    for (const auto& id : ids) {
      if (i++ < n_train) {
        out[id] = Split::train;
      } else {
        pool.push_back(id);
      }
    }
  }
  for (std::size_t i = 0; i < pool.size(); ++i) out[pool[i]] = i % 2 == 0 ? Split::val : Split::test;
  return out;
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir / "blobs");
  std::ofstream manifest(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
  if (!manifest) throw FormatError("cannot write " + (dir / "manifest.txt").string());
  json header = {{"format", "aura-dataset"},
                 {"version", 1},
                 {"name", ds.name},
                 {"labels", ds.labels},
                 {"embedding_dim", ds.embedding_dim},
                 {"vocabulary", "vocab.txt"},
                 {"records", ds.records.size()}};
  manifest << header.dump() << '\n';
  for (const auto& r : ds.records) {
    json line = {{"source_id", r.source_id},
                 {"offset_s", r.offset_s},
                 {"offset_ms", r.offset_ms()},
                 {"split", to_string(r.split)}};
    if (r.label) line["label"] = *r.label;
    std::vector<std::string> modalities;
    const fs::path stem = dir / "blobs" / r.blob_stem();
    if (r.imu) {
      modalities.push_back("imu");
      save_blob(stem.string() + ".imu.bin", *r.imu);
    }
    if (r.mocap) {
      modalities.push_back("mocap");
      save_blob(stem.string() + ".mocap.bin", *r.mocap);
      Tensor mask({kMocapJoints, kMocapFrames});
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (*r.mocap_valid)[i] ? 1.0 : 0.0;
      save_blob(stem.string() + ".mocap_valid.bin", mask);
    }
    if (r.text) {
      modalities.push_back("text");
      line["text"] = r.text->raw_text;
      line["tokens"] = r.text->token_ids.size();
      if (!r.text->token_ids.empty()) {
        Tensor ids({r.text->token_ids.size()});
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = r.text->token_ids[i];
        save_blob(stem.string() + ".text.bin", ids);
      }
    }
    if (r.video_emb) {
      modalities.push_back("video_emb");
      save_blob(stem.string() + ".video_emb.bin", *r.video_emb);
    }
    line["modalities"] = modalities;
    manifest << line.dump() << '\n';
  }
  if (!manifest) throw FormatError("write failed for manifest");
  ds.vocabulary.save((dir / "vocab.txt").string());
}

Dataset read_dataset(const fs::path& dir) {
  std::ifstream manifest(dir / "manifest.txt", std::ios::binary);
  if (!manifest) throw FormatError("no manifest.txt in " + dir.string());
  std::string line;
  if (!std::getline(manifest, line)) throw FormatError("empty manifest in " + dir.string());
  Dataset ds;
  std::size_t expected_records = 0;
  try {
    const json header = json::parse(line);
    if (header.at("format") != "aura-dataset") throw FormatError("manifest: unknown format");
    if (header.at("version") != 1) {
      throw FormatError("manifest: unsupported version " + header.at("version").dump());
    }
    ds.name = header.value("name", "");
    ds.labels = header.at("labels").get<std::vector<std::string>>();
    ds.embedding_dim = header.at("embedding_dim").get<std::size_t>();
    expected_records = header.at("records").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError("manifest header: " + std::string(e.what()));
  }
  ds.vocabulary = Vocabulary::load((dir / "vocab.txt").string());
  std::size_t line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    DatasetRecord r;
    try {
      const json j = json::parse(line);
      r.source_id = j.at("source_id").get<std::string>();
      r.offset_s = j.at("offset_s").get<double>();
      r.split = parse_split(j.at("split").get<std::string>());
      if (j.contains("label")) r.label = j.at("label").get<std::string>();
      if (j.at("offset_ms").get<long long>() != r.offset_ms()) {
        throw FormatError("offset_ms disagrees with offset_s");
      }
      const fs::path stem = dir / "blobs" / r.blob_stem();
      for (const auto& m : j.at("modalities")) {
        const std::string mod = m.get<std::string>();
        if (mod == "imu") {
          r.imu = load_blob(stem.string() + ".imu.bin");
        } else if (mod == "mocap") {
          r.mocap = load_blob(stem.string() + ".mocap.bin");
          const Tensor mask = load_blob(stem.string() + ".mocap_valid.bin");
          if (mask.shape() != Shape{kMocapJoints, kMocapFrames}) {
            throw FormatError("mocap_valid must be [17x50], got " + shape_string(mask.shape()));
          }
          r.mocap_valid.emplace(mask.size());
          for (std::size_t i = 0; i < mask.size(); ++i) (*r.mocap_valid)[i] = mask[i] != 0.0;
        } else if (mod == "text") {
          TextSnippet t;
          t.raw_text = j.value("text", "");
          const auto n = j.at("tokens").get<std::size_t>();
          if (n > 0) {
            const Tensor ids = load_blob(stem.string() + ".text.bin");
            if (ids.shape() != Shape{n}) throw FormatError("token blob length mismatch");
            for (double v : ids.data()) t.token_ids.push_back(static_cast<int>(v));
          }
          r.text = std::move(t);
        } else if (mod == "video_emb") {
          r.video_emb = load_blob(stem.string() + ".video_emb.bin");
        } else {
          throw FormatError("unknown modality '" + mod + "'");
        }
      }
    } catch (const json::exception& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    ds.records.push_back(std::move(r));
  }
  if (ds.records.size() != expected_records) {
    throw FormatError("manifest declares " + std::to_string(expected_records) + " records, found " +
                      std::to_string(ds.records.size()));
  }
  ds.validate();
  return ds;
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, ckpt.metadata.size());
  out.write(ckpt.metadata.data(), static_cast<std::streamsize>(ckpt.metadata.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_blob(out, t, BlobType::f64);
  }
}

Checkpoint read_checkpoint(std::istream& in, const std::string& what) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw FormatError(what + ": truncated header");
  if (magic != kCheckpointMagic) throw FormatError(what + ": bad magic, not an AURC checkpoint");
  const auto version = get_le<std::uint32_t>(in, what);
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = get_le<std::uint64_t>(in, what);
  if (meta_len > (1ULL << 30)) throw FormatError(what + ": metadata too large");
  Checkpoint ckpt;
  ckpt.metadata.resize(meta_len);
  if (!in.read(ckpt.metadata.data(), static_cast<std::streamsize>(meta_len))) {
    throw FormatError(what + ": truncated metadata");
  }
  const auto count = get_le<std::uint32_t>(in, what);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint32_t>(in, what);
    if (name_len > 4096) throw FormatError(what + ": tensor name too long");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError(what + ": truncated tensor name");
    Tensor t = read_blob(in, what + ":" + name);
    if (!ckpt.tensors.emplace(std::move(name), std::move(t)).second) {
      throw FormatError(what + ": duplicate tensor name");
    }
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  write_checkpoint(ckpt, out);
  if (!out) throw FormatError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  Checkpoint c = read_checkpoint(in, path.string());
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after checkpoint");
  }
  return c;
}

}  // namespace aura
