#include "aura/encoders.hpp"

#include <cmath>
#include <cstring>
#include <json.hpp>

#include "aura/error.hpp"
#include "aura/rng.hpp"

namespace aura {
using json = nlohmann::json;

namespace {

constexpr double kInitStd = 0.02;

std::string layer_name(std::size_t l, const char* part) { return "l" + std::to_string(l) + "." + part; }
std::string block_name(std::size_t b, const char* part) { return "c" + std::to_string(b) + "." + part; }

/// Name → shape for every tensor of the config, before initialization.
std::vector<std::pair<std::string, Shape>> layout(const EncoderConfig& cfg) {
  std::vector<std::pair<std::string, Shape>> out;
  const std::size_t D = cfg.out_dim;
  if (cfg.kind == EncoderKind::transformer) {
    const auto& t = cfg.transformer;
    const std::size_t d = t.model_dim;
    out.push_back({"patch.w", {cfg.channels() * t.patch_len, d}});
    out.push_back({"patch.b", {d}});
    out.push_back({"pos", {cfg.tokens(), d}});
    for (std::size_t l = 0; l < t.layers; ++l) {
      out.push_back({layer_name(l, "ln1.g"), {d}});
      out.push_back({layer_name(l, "ln1.b"), {d}});
      out.push_back({layer_name(l, "qkv.w"), {d, 3 * d}});
      out.push_back({layer_name(l, "qkv.b"), {3 * d}});
      out.push_back({layer_name(l, "proj.w"), {d, d}});
      out.push_back({layer_name(l, "proj.b"), {d}});
      out.push_back({layer_name(l, "ln2.g"), {d}});
      out.push_back({layer_name(l, "ln2.b"), {d}});
      out.push_back({layer_name(l, "mlp1.w"), {d, t.mlp_dim}});
      out.push_back({layer_name(l, "mlp1.b"), {t.mlp_dim}});
      out.push_back({layer_name(l, "mlp2.w"), {t.mlp_dim, d}});
      out.push_back({layer_name(l, "mlp2.b"), {d}});
    }
    out.push_back({"final_ln.g", {d}});
    out.push_back({"final_ln.b", {d}});
    out.push_back({"out.w", {d, D}});
    out.push_back({"out.b", {D}});
  } else {
    const auto& r = cfg.rnn;
    std::size_t in = cfg.channels();
    for (std::size_t b = 0; b < r.widths.size(); ++b) {
      out.push_back({block_name(b, "w"), {r.widths[b], in, r.kernel}});
      out.push_back({block_name(b, "b"), {r.widths[b]}});
      out.push_back({block_name(b, "gn.g"), {r.widths[b]}});
      out.push_back({block_name(b, "gn.b"), {r.widths[b]}});
      in = r.widths[b];
    }
    const std::size_t H = r.hidden;
    out.push_back({"gru.wx", {in, 3 * H}});
    out.push_back({"gru.bx", {3 * H}});
    out.push_back({"gru.wh", {H, 3 * H}});
    out.push_back({"gru.bh", {3 * H}});
    out.push_back({"out.w", {H, D}});
    out.push_back({"out.b", {D}});
  }
  return out;
}

bool ends_with(const std::string& s, const char* suffix) {
  const std::size_t n = std::strlen(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

bool is_gain(const std::string& name) { return ends_with(name, ".g"); }
bool is_weight(const std::string& name) {
  return ends_with(name, ".w") || ends_with(name, ".wx") || ends_with(name, ".wh") || name == "pos";
}

void check_finite(Var v, int layer, const char* where) {
  if (!v.value().all_finite()) {
    throw NumericError(std::string("encoder: non-finite activations in ") + where, layer);
  }
}

Var dropout(Tape& tape, Var x, double p, std::uint64_t seed) {
  if (p <= 0.0) return x;
  Rng rng(seed);
  Tensor mask(x.shape());
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep;
  return ad::mul(x, tape.constant(std::move(mask)));
}

/// [1×n]·[n×m] + b as a vector.
Var linear_vec(Var x, Var w, Var b) {
  const std::size_t n = x.shape()[0];
  Var y = ad::matmul(ad::reshape(x, {1, n}), w);
  y = ad::add_row(y, b);
  return ad::reshape(y, {w.shape()[1]});
}

Var transformer_forward(Tape& tape, const BoundParams& p, const EncoderConfig& cfg, const Tensor& window,
                        const EncodeOptions& opt) {
  const auto& t = cfg.transformer;
  const std::size_t d = t.model_dim;
  const std::size_t dh = d / t.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var x = patch_embed(tape, p, cfg, window);
  check_finite(x, -1, "patch embedding");
  for (std::size_t l = 0; l < t.layers; ++l) {
    Var h = ad::layer_norm(x, p[layer_name(l, "ln1.g")], p[layer_name(l, "ln1.b")]);
    Var qkv = ad::add_row(ad::matmul(h, p[layer_name(l, "qkv.w")]), p[layer_name(l, "qkv.b")]);
    std::vector<Var> heads;
    heads.reserve(t.heads);
    for (std::size_t k = 0; k < t.heads; ++k) {
      Var q = ad::slice_cols(qkv, k * dh, dh);
      Var kk = ad::slice_cols(qkv, d + k * dh, dh);
      Var v = ad::slice_cols(qkv, 2 * d + k * dh, dh);
      Var a = ad::softmax_rows(ad::affine(ad::matmul_nt(q, kk), scale));
      heads.push_back(ad::matmul(a, v));
    }
    Var att = ad::add_row(ad::matmul(ad::concat_cols(heads), p[layer_name(l, "proj.w")]),
                          p[layer_name(l, "proj.b")]);
    if (opt.train) att = dropout(tape, att, t.dropout, mix_seed(opt.dropout_seed, 2 * l));
    x = ad::add(x, att);
    h = ad::layer_norm(x, p[layer_name(l, "ln2.g")], p[layer_name(l, "ln2.b")]);
    h = ad::gelu(ad::add_row(ad::matmul(h, p[layer_name(l, "mlp1.w")]), p[layer_name(l, "mlp1.b")]));
    h = ad::add_row(ad::matmul(h, p[layer_name(l, "mlp2.w")]), p[layer_name(l, "mlp2.b")]);
    if (opt.train) h = dropout(tape, h, t.dropout, mix_seed(opt.dropout_seed, 2 * l + 1));
    x = ad::add(x, h);
    check_finite(x, static_cast<int>(l), "transformer block");
  }
  x = ad::layer_norm(x, p["final_ln.g"], p["final_ln.b"]);
  Var pooled = ad::mean_rows(x);
  Var out = linear_vec(pooled, p["out.w"], p["out.b"]);
  check_finite(out, static_cast<int>(t.layers), "output projection");
  return ad::l2_normalize(out);
}

Var rnn_forward(Tape& tape, const BoundParams& p, const EncoderConfig& cfg, const Tensor& window) {
  const auto& r = cfg.rnn;
  Var x = tape.constant(window);
  for (std::size_t b = 0; b < r.widths.size(); ++b) {
    x = ad::conv1d(x, p[block_name(b, "w")], p[block_name(b, "b")], r.stride, r.kernel / 2);
    x = ad::group_norm(x, p[block_name(b, "gn.g")], p[block_name(b, "gn.b")], r.groups);
    x = ad::gelu(x);
    check_finite(x, static_cast<int>(b), "convolution block");
  }
  // Input projections for all steps at once: [T × 3H].
  const std::size_t H = r.hidden;
  Var xp = ad::add_row(ad::matmul(ad::transpose(x), p["gru.wx"]), p["gru.bx"]);
  const std::size_t steps = xp.shape()[0];
  Var h = tape.constant(Tensor({1, H}));
  for (std::size_t s = 0; s < steps; ++s) {
    Var xs = ad::reshape(ad::row(xp, s), {1, 3 * H});
    Var hs = ad::add_row(ad::matmul(h, p["gru.wh"]), p["gru.bh"]);
    Var z = ad::sigmoid(ad::add(ad::slice_cols(xs, 0, H), ad::slice_cols(hs, 0, H)));
    Var rg = ad::sigmoid(ad::add(ad::slice_cols(xs, H, H), ad::slice_cols(hs, H, H)));
    Var n = ad::tanh(ad::add(ad::slice_cols(xs, 2 * H, H), ad::mul(rg, ad::slice_cols(hs, 2 * H, H))));
    // h ← (1 − z)·n + z·h
    h = ad::add(ad::mul(ad::affine(z, -1.0, 1.0), n), ad::mul(z, h));
  }
  check_finite(h, static_cast<int>(r.widths.size()), "recurrent layer");
  Var out = linear_vec(ad::reshape(h, {H}), p["out.w"], p["out.b"]);
  check_finite(out, static_cast<int>(r.widths.size()) + 1, "output projection");
  return ad::l2_normalize(out);
}

json stats_to_json(const ChannelStats& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

}  // namespace

std::string to_string(EncoderKind k) { return k == EncoderKind::transformer ? "transformer" : "rnn"; }

EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "transformer") return EncoderKind::transformer;
  if (s == "rnn") return EncoderKind::rnn;
  throw ConfigError("unknown encoder '" + s + "' (expected transformer or rnn)");
}

std::string to_string(Modality m) { return m == Modality::imu ? "imu" : "mocap"; }

Modality parse_modality(const std::string& s) {
  if (s == "imu") return Modality::imu;
  if (s == "mocap") return Modality::mocap;
  throw ConfigError("unknown modality '" + s + "' (expected imu or mocap)");
}

Shape window_shape(Modality m) {
  return m == Modality::imu ? Shape{kImuChannels, kImuWindowSamples} : Shape{kMocapChannels, kMocapFrames};
}

EncoderConfig EncoderConfig::make(EncoderKind kind, Modality modality) {
  EncoderConfig c;
  c.kind = kind;
  c.modality = modality;
  c.transformer.patch_len = modality == Modality::imu ? 20 : 5;
  return c;
}

std::size_t EncoderConfig::rnn_steps() const {
  std::size_t len = length();
  for (std::size_t b = 0; b < rnn.widths.size(); ++b) {
    const std::size_t padded = len + 2 * (rnn.kernel / 2);
    if (padded < rnn.kernel) return 0;
    len = (padded - rnn.kernel) / rnn.stride + 1;
  }
  return len;
}

void EncoderConfig::validate() const {
  if (out_dim == 0) throw ConfigError("encoder: out_dim must be positive");
  if (kind == EncoderKind::transformer) {
    const auto& t = transformer;
    if (t.patch_len == 0 || length() % t.patch_len != 0) {
      throw ConfigError("transformer: patch_len " + std::to_string(t.patch_len) +
                        " does not divide the window length " + std::to_string(length()));
    }
    if (t.heads == 0 || t.model_dim == 0 || t.model_dim % t.heads != 0) {
      throw ConfigError("transformer: model_dim " + std::to_string(t.model_dim) +
                        " is not divisible by heads " + std::to_string(t.heads));
    }
    if (t.layers == 0 || t.mlp_dim == 0) throw ConfigError("transformer: layers and mlp_dim must be positive");
    if (!(t.dropout >= 0.0 && t.dropout < 1.0)) throw ConfigError("transformer: dropout must lie in [0, 1)");
  } else {
    const auto& r = rnn;
    if (r.widths.empty()) throw ConfigError("rnn: at least one convolution block is required");
    if (r.kernel == 0 || r.stride == 0 || r.hidden == 0 || r.groups == 0) {
      throw ConfigError("rnn: kernel, stride, hidden and groups must be positive");
    }
    for (auto w : r.widths) {
      if (w == 0 || w % r.groups != 0) {
        throw ConfigError("rnn: channel width " + std::to_string(w) + " is not divisible by " +
                          std::to_string(r.groups) + " groups");
      }
    }
    if (rnn_steps() == 0) throw ConfigError("rnn: convolution stack leaves no time steps");
  }
}

std::string EncoderConfig::to_json() const {
  const json j = {{"kind", to_string(kind)},
                  {"modality", to_string(modality)},
                  {"out_dim", out_dim},
                  {"transformer",
                   {{"patch_len", transformer.patch_len},
                    {"model_dim", transformer.model_dim},
                    {"heads", transformer.heads},
                    {"layers", transformer.layers},
                    {"mlp_dim", transformer.mlp_dim},
                    {"dropout", transformer.dropout}}},
                  {"rnn",
                   {{"widths", rnn.widths},
                    {"kernel", rnn.kernel},
                    {"stride", rnn.stride},
                    {"groups", rnn.groups},
                    {"hidden", rnn.hidden}}}};
  return j.dump();
}

EncoderConfig EncoderConfig::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EncoderConfig c;
    c.kind = parse_encoder_kind(j.at("kind").get<std::string>());
    c.modality = parse_modality(j.at("modality").get<std::string>());
    c.out_dim = j.at("out_dim").get<std::size_t>();
    const auto& t = j.at("transformer");
    c.transformer.patch_len = t.at("patch_len").get<std::size_t>();
    c.transformer.model_dim = t.at("model_dim").get<std::size_t>();
    c.transformer.heads = t.at("heads").get<std::size_t>();
    c.transformer.layers = t.at("layers").get<std::size_t>();
    c.transformer.mlp_dim = t.at("mlp_dim").get<std::size_t>();
    c.transformer.dropout = t.at("dropout").get<double>();
    const auto& r = j.at("rnn");
    c.rnn.widths = r.at("widths").get<std::vector<std::size_t>>();
    c.rnn.kernel = r.at("kernel").get<std::size_t>();
    c.rnn.stride = r.at("stride").get<std::size_t>();
    c.rnn.groups = r.at("groups").get<std::size_t>();
    c.rnn.hidden = r.at("hidden").get<std::size_t>();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("encoder config: ") + e.what());
  }
}

bool operator==(const EncoderConfig& a, const EncoderConfig& b) { return a.to_json() == b.to_json(); }

std::size_t parameter_count(const EncoderConfig& config) {
  config.validate();
  std::size_t n = 0;
  for (const auto& [name, shape] : layout(config)) n += shape_numel(shape);
  return n;
}

const Tensor& EncoderParams::at(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw LookupError("encoder parameter '" + name + "' not found");
  return it->second;
}

Tensor& EncoderParams::at(const std::string& name) {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw LookupError("encoder parameter '" + name + "' not found");
  return it->second;
}

std::size_t EncoderParams::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.size();
  return n;
}

void EncoderParams::validate() const {
  config.validate();
  const auto want = layout(config);
  if (want.size() != tensors.size()) {
    throw ContractError("encoder parameters: expected " + std::to_string(want.size()) + " tensors, found " +
                        std::to_string(tensors.size()));
  }
  for (const auto& [name, shape] : want) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("encoder parameters: missing '" + name + "'");
    if (it->second.shape() != shape) {
      throw ContractError("encoder parameters: '" + name + "' has shape " + shape_string(it->second.shape()) +
                          ", config requires " + shape_string(shape));
    }
    if (!it->second.all_finite()) throw ContractError("encoder parameters: '" + name + "' is not finite");
  }
  if (input_stats && input_stats->channels() != config.channels()) {
    throw ContractError("encoder parameters: input statistics cover " +
                        std::to_string(input_stats->channels()) + " channels, window has " +
                        std::to_string(config.channels()));
  }
}

std::uint64_t EncoderParams::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : tensors) {
    feed(name.data(), name.size());
    feed(t.raw(), t.size() * sizeof(double));
  }
  return h;
}

Checkpoint EncoderParams::to_checkpoint(const std::string& extra_metadata_json) const {
  json meta = {{"format", "aura-encoder"}, {"config", json::parse(config.to_json())}};
  if (input_stats) meta["input_stats"] = stats_to_json(*input_stats);
  const json extra = json::parse(extra_metadata_json);
  if (!extra.is_object()) throw ContractError("checkpoint metadata must be a JSON object");
  for (const auto& [k, v] : extra.items()) meta["extra"][k] = v;
  return Checkpoint{meta.dump(), tensors};
}

EncoderParams EncoderParams::from_checkpoint(const Checkpoint& ckpt) {
  EncoderParams p;
  try {
    const json meta = json::parse(ckpt.metadata);
    if (meta.value("format", "") != "aura-encoder") throw FormatError("checkpoint is not an encoder checkpoint");
    p.config = EncoderConfig::from_json(meta.at("config").dump());
    if (meta.contains("input_stats")) {
      ChannelStats s;
      s.mean = meta["input_stats"].at("mean").get<std::vector<double>>();
      s.stddev = meta["input_stats"].at("std").get<std::vector<double>>();
      p.input_stats = std::move(s);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  p.tensors = ckpt.tensors;
  try {
    p.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint does not match its config: ") + e.what());
  }
  return p;
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  EncoderParams p;
  p.config = config;
  std::uint64_t index = 0;
  for (const auto& [name, shape] : layout(config)) {
    Tensor t(shape);
    if (is_gain(name)) {
      t.fill(1.0);
    } else if (is_weight(name)) {
      // Every tensor draws from its own stream so that adding a layer does
      // not perturb the others.
      Rng rng(mix_seed(seed, index));
      for (auto& v : t.data()) v = kInitStd * rng.normal();
    }
    ++index;
    p.tensors.emplace(name, std::move(t));
  }
  return p;
}

Var BoundParams::operator[](const std::string& name) const {
  const auto it = vars.find(name);
  if (it == vars.end()) throw LookupError("encoder parameter '" + name + "' not bound");
  return it->second;
}

BoundParams bind(Tape& tape, const EncoderParams& params, bool trainable) {
  BoundParams b;
  for (const auto& [name, t] : params.tensors) {
    b.vars.emplace(name, trainable ? tape.parameter(t) : tape.view(t));
  }
  return b;
}

Var patch_embed(Tape& tape, const BoundParams& p, const EncoderConfig& config, const Tensor& window) {
  const Shape want = window_shape(config.modality);
  if (window.shape() != want) {
    throw DimensionError("encoder: window has shape " + shape_string(window.shape()) + ", expected " +
                         shape_string(want));
  }
  const std::size_t C = config.channels();
  const std::size_t P = config.transformer.patch_len;
  const std::size_t N = config.tokens();
  Tensor patches({N, C * P});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < P; ++j) patches(n, c * P + j) = window(c, n * P + j);
  Var x = ad::add_row(ad::matmul(tape.constant(std::move(patches)), p["patch.w"]), p["patch.b"]);
  return ad::add(x, p["pos"]);
}

Tensor patch_embed(const Tensor& window, const EncoderParams& params) {
  if (params.config.kind != EncoderKind::transformer) throw ContractError("patch_embed: not a transformer");
  Tape tape;
  return patch_embed(tape, bind(tape, params, false), params.config, window).value();
}

Var encode(Tape& tape, const BoundParams& p, const EncoderConfig& config, const Tensor& window,
           const EncodeOptions& options) {
  const Shape want = window_shape(config.modality);
  if (window.shape() != want) {
    throw DimensionError("encoder: window has shape " + shape_string(window.shape()) + ", expected " +
                         shape_string(want));
  }
  if (!window.all_finite()) throw NumericError("encoder: non-finite input window", -1);
  return config.kind == EncoderKind::transformer ? transformer_forward(tape, p, config, window, options)
                                                 : rnn_forward(tape, p, config, window);
}

Tensor encode(const EncoderParams& params, const Tensor& window) {
  Tape tape;
  return encode(tape, bind(tape, params, false), params.config, window).value();
}

Tensor encode_transformer(const Tensor& window, const EncoderParams& params) {
  if (params.config.kind != EncoderKind::transformer) throw ContractError("encode_transformer: params are for an rnn");
  return encode(params, window);
}

Tensor encode_rnn(const Tensor& window, const EncoderParams& params) {
  if (params.config.kind != EncoderKind::rnn) throw ContractError("encode_rnn: params are for a transformer");
  return encode(params, window);
}

Tensor encode_batch(const EncoderParams& params, std::span<const Tensor> windows) {
  if (windows.empty()) throw InsufficientDataError("encode_batch: no windows");
  Tensor out({windows.size(), params.config.out_dim});
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Tensor e = encode(params, windows[i]);
    std::copy(e.data().begin(), e.data().end(), out.row(i).begin());
  }
  return out;
}

Tensor prepare_window(const EncoderParams& params, const Tensor& raw) {
  Tensor w = raw;
  if (params.config.modality == Modality::mocap && raw.rank() == 3) {
    w = raw.reshaped({raw.dim(0) * raw.dim(1), raw.dim(2)});
  }
  if (params.input_stats) w = standardize_channels(w, *params.input_stats);
  return w;
}

FrozenAnchor FrozenAnchor::pseudo(std::uint64_t seed, std::size_t dim) {
  if (dim == 0) throw ConfigError("anchor: dim must be positive");
  FrozenAnchor a;
  a.mode_ = Mode::pseudo;
  a.seed_ = seed;
  a.dim_ = dim;
  return a;
}

FrozenAnchor FrozenAnchor::table(const std::map<std::string, Tensor>& entries) {
  if (entries.empty()) throw ConfigError("anchor: empty table");
  FrozenAnchor a;
  a.mode_ = Mode::table;
  a.dim_ = entries.begin()->second.size();
  for (const auto& [key, v] : entries) {
    if (v.rank() != 1 || v.size() != a.dim_) {
      throw DimensionError("anchor: table entry '" + key + "' has shape " + shape_string(v.shape()));
    }
    a.table_.emplace(key, l2_normalize(v));
  }
  return a;
}

Tensor FrozenAnchor::embed(const TextSnippet& text) const {
  if (mode_ != Mode::pseudo) throw ContractError("anchor: table mode embeds ids, not text");
  if (text.token_ids.empty()) throw NumericError("anchor: text '" + text.raw_text + "' has no tokens");
  std::map<int, std::size_t> counts;
  for (int id : text.token_ids) ++counts[id];
  Tensor out({dim_});
  for (const auto& [id, n] : counts) {
    Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(id)));
    const double w = static_cast<double>(n);
    for (auto& v : out.data()) v += w * rng.normal();
  }
  return l2_normalize(out);
}

Tensor FrozenAnchor::embed(const std::string& id) const {
  if (mode_ != Mode::table) throw ContractError("anchor: pseudo mode embeds text, not ids");
  const auto it = table_.find(id);
  if (it == table_.end()) throw LookupError("anchor: no precomputed embedding for key '" + id + "'");
  return it->second;
}

Tensor anchor_embed(const FrozenAnchor& anchor, const TextSnippet& text) { return anchor.embed(text); }
Tensor anchor_embed(const FrozenAnchor& anchor, const std::string& id) { return anchor.embed(id); }

}  // namespace aura
