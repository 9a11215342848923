#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aura/encoders.hpp"
#include "aura/tensor.hpp"

namespace aura {

enum class OptimizerKind { sgd, adam };
std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  /// Write an epoch checkpoint every N epochs (0 = only the best one).
  std::size_t checkpoint_every = 0;
  /// Worker threads for per-sample forward/backward work. Results do not
  /// depend on this value.
  std::size_t threads = 1;
  /// Where logs and checkpoints go; nothing is written when empty.
  std::filesystem::path run_dir;

  /// Throws ConfigError; batch sizes below 2 make the contrastive loss constant.
  void validate() const;
};

struct OptimizerState {
  std::size_t step = 0;
  std::map<std::string, Tensor> m;  // first moments (adam)
  std::map<std::string, Tensor> v;  // second moments (adam)
};

using ParamMap = std::map<std::string, Tensor>;

/// One optimizer step in place. SGD: θ ← θ − lr·g. Adam: bias-corrected
/// moments with the configured betas and eps. Throws DimensionError when a
/// gradient does not match its parameter, LookupError for unknown names.
void update_step(ParamMap& params, const ParamMap& grads, OptimizerState& state, const TrainConfig& config);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double seconds = 0.0;
};

struct TrainReport {
  std::string name;
  /// Loss of the initial parameters over the first epoch's batches (no dropout).
  double initial_loss = 0.0;
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  std::optional<double> best_val_loss;
  std::filesystem::path checkpoint_path;

  double final_train_loss() const { return epochs.empty() ? initial_loss : epochs.back().train_loss; }
  /// Epoch, train and validation losses without timings; identical across
  /// reruns with the same seed.
  std::string loss_curve() const;
};

/// Fixed contrastive counterpart: each training window i pairs with row i.
struct PairedData {
  std::vector<Tensor> windows;  // prepared trainee inputs
  Tensor targets;               // [N × D] unit rows
};

struct TrainResult {
  EncoderParams params;  // best-validation parameters
  TrainReport report;
};

/// Trains `trainee` against fixed unit embeddings (a frozen anchor or a
/// frozen encoder's outputs) by minimizing the symmetric InfoNCE loss with
/// seeded per-epoch shuffling. The incomplete last batch is dropped. The
/// returned parameters are those with the lowest validation loss (the whole
/// validation split is one batch). Errors: ConfigError for fewer training
/// pairs than one batch; TrainingError on non-finite loss.
TrainResult train_pair(EncoderParams trainee, const PairedData& train, const std::optional<PairedData>& val,
                       const TrainConfig& config, const std::string& name = "trainee");

/// Two trainable encoders aligned from scratch on paired windows (no anchor).
struct JointData {
  std::vector<Tensor> a;
  std::vector<Tensor> b;
};

struct JointResult {
  EncoderParams a;
  EncoderParams b;
  TrainReport report;
};

JointResult train_joint(EncoderParams a, EncoderParams b, const JointData& train, const std::optional<JointData>& val,
                        const TrainConfig& config, const std::string& name = "joint");

struct ProgressiveData {
  PairedData stage1_train;  // IMU windows with anchor embeddings
  std::optional<PairedData> stage1_val;
  JointData stage2_train;  // a = mocap windows, b = IMU windows
  std::optional<JointData> stage2_val;
};

struct ProgressiveResult {
  EncoderParams imu;
  EncoderParams mocap;
  TrainReport stage1;
  TrainReport stage2;
  std::uint64_t imu_checksum_before_stage2 = 0;
  std::uint64_t imu_checksum_after_stage2 = 0;
};

/// Stage 1 aligns the IMU encoder with the anchor; stage 2 freezes it and
/// aligns the mocap encoder with its embeddings.
ProgressiveResult train_progressive(EncoderParams imu, EncoderParams mocap, const ProgressiveData& data,
                                    const TrainConfig& stage1, const TrainConfig& stage2);

/// Loss and parameter gradients of one contrastive batch; the trainee is
/// differentiated per sample and the results are summed in index order.
struct BatchGradient {
  double loss = 0.0;
  ParamMap grads_a;
  ParamMap grads_b;  // empty unless b is trainable
};

BatchGradient contrastive_gradient(const EncoderParams& a, std::span<const Tensor* const> windows_a,
                                   const EncoderParams* b, std::span<const Tensor* const> windows_b,
                                   const Tensor* fixed_targets, double temperature, std::size_t threads = 1,
                                   std::optional<std::uint64_t> dropout_seed = std::nullopt);

/// Symmetric InfoNCE of the eval-mode embeddings.
double contrastive_loss(const EncoderParams& a, std::span<const Tensor> windows, const Tensor& targets,
                        double temperature);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Eval-mode embeddings of many windows, computed in parallel: [N × D].
Tensor embed_all(const EncoderParams& params, std::span<const Tensor> windows, std::size_t threads = 1);

}  // namespace aura
