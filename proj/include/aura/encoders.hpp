#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aura/autodiff.hpp"
#include "aura/data_io.hpp"
#include "aura/signal.hpp"
#include "aura/tensor.hpp"

namespace aura {

enum class EncoderKind { transformer, rnn };
std::string to_string(EncoderKind k);
EncoderKind parse_encoder_kind(const std::string& s);

/// Input modality; fixes the window shape the encoder accepts.
enum class Modality { imu, mocap };
std::string to_string(Modality m);
Modality parse_modality(const std::string& s);
/// [6 × 1000] for IMU, [51 × 50] (flattened joints) for mocap.
Shape window_shape(Modality m);

struct TransformerConfig {
  std::size_t patch_len = 20;
  std::size_t model_dim = 128;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t mlp_dim = 256;
  double dropout = 0.1;  // training forward passes only
};

struct RnnConfig {
  std::vector<std::size_t> widths{32, 64, 128};  // one conv block per entry
  std::size_t kernel = 5;
  std::size_t stride = 2;
  std::size_t groups = 8;  // group normalization groups per block
  std::size_t hidden = 128;
};

struct EncoderConfig {
  EncoderKind kind = EncoderKind::transformer;
  Modality modality = Modality::imu;
  std::size_t out_dim = 512;
  TransformerConfig transformer;
  RnnConfig rnn;

  /// Library defaults: patch 20 for IMU windows and 5 for mocap windows.
  static EncoderConfig make(EncoderKind kind, Modality modality);

  std::size_t channels() const { return window_shape(modality)[0]; }
  std::size_t length() const { return window_shape(modality)[1]; }
  std::size_t tokens() const { return length() / transformer.patch_len; }
  /// Temporal length after the convolution stack.
  std::size_t rnn_steps() const;

  /// Throws ConfigError on any inconsistent dimension.
  void validate() const;

  std::string to_json() const;
  static EncoderConfig from_json(const std::string& text);

  friend bool operator==(const EncoderConfig& a, const EncoderConfig& b);
};

/// Closed-form number of scalar parameters.
std::size_t parameter_count(const EncoderConfig& config);

struct EncoderParams {
  EncoderConfig config;
  std::map<std::string, Tensor> tensors;
  /// Per-channel standardization fitted on the training split, if any.
  std::optional<ChannelStats> input_stats;

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::size_t count() const;
  /// Throws ContractError when a tensor is missing, misshapen or non-finite.
  void validate() const;
  /// FNV-1a over names and raw bytes; used to prove frozen parameters stay put.
  std::uint64_t checksum() const;

  Checkpoint to_checkpoint(const std::string& extra_metadata_json = "{}") const;
  static EncoderParams from_checkpoint(const Checkpoint& ckpt);
};

/// Linear and positional weights ~ N(0, 0.02²); norm gains 1, shifts and
/// biases 0. Fully determined by the seed.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

/// Parameter leaves on a tape, by name.
struct BoundParams {
  std::map<std::string, Var> vars;
  Var operator[](const std::string& name) const;
};

/// Trainable leaves receive gradients; frozen leaves are plain views.
BoundParams bind(Tape& tape, const EncoderParams& params, bool trainable);

struct EncodeOptions {
  bool train = false;             // enables dropout
  std::uint64_t dropout_seed = 0;  // per-sample stream for dropout masks
};

/// Flattens each patch (channel-major, C·patch_len values), projects it to
/// model_dim and adds the position's embedding: [tokens × model_dim].
Var patch_embed(Tape& tape, const BoundParams& p, const EncoderConfig& config, const Tensor& window);
Tensor patch_embed(const Tensor& window, const EncoderParams& params);

/// Unit embedding [out_dim]. Throws DimensionError when the window shape does
/// not match the config and NumericError (with the layer index) on NaN.
Var encode(Tape& tape, const BoundParams& p, const EncoderConfig& config, const Tensor& window,
           const EncodeOptions& options = {});

/// Eval-mode forward passes.
Tensor encode(const EncoderParams& params, const Tensor& window);
Tensor encode_transformer(const Tensor& window, const EncoderParams& params);
Tensor encode_rnn(const Tensor& window, const EncoderParams& params);
/// Rows are the embeddings of `windows`, in order: [B × out_dim].
Tensor encode_batch(const EncoderParams& params, std::span<const Tensor> windows);

/// Applies the stored input standardization (identity when none is stored)
/// and reshapes mocap [17×3×50] windows to [51×50].
Tensor prepare_window(const EncoderParams& params, const Tensor& raw);

// ---------------------------------------------------------------------------
// Frozen anchors: fixed, gradient-free stand-ins for pre-trained text/video
// encoders.
// ---------------------------------------------------------------------------

class FrozenAnchor {
 public:
  enum class Mode { table, pseudo };

  /// Fixed random projection of the token-count vector: each token id maps
  /// to its own seeded Gaussian direction.
  static FrozenAnchor pseudo(std::uint64_t seed, std::size_t dim = 512);
  /// Lookup of precomputed vectors (renormalized on insertion).
  static FrozenAnchor table(const std::map<std::string, Tensor>& entries);

  Mode mode() const { return mode_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  const std::map<std::string, Tensor>& entries() const { return table_; }

  /// Pseudo mode only. Throws NumericError for text without tokens.
  Tensor embed(const TextSnippet& text) const;
  /// Table mode only. Throws LookupError naming the missing key.
  Tensor embed(const std::string& id) const;

 private:
  Mode mode_ = Mode::pseudo;
  std::size_t dim_ = 512;
  std::uint64_t seed_ = 0;
  std::map<std::string, Tensor> table_;
};

Tensor anchor_embed(const FrozenAnchor& anchor, const TextSnippet& text);
Tensor anchor_embed(const FrozenAnchor& anchor, const std::string& id);

}  // namespace aura
