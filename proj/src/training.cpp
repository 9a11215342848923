#include "aura/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include "aura/contrastive.hpp"
#include "aura/error.hpp"
#include "aura/log.hpp"
#include "aura/rng.hpp"

namespace aura {
namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train: batch_size must be at least 2 for a contrastive loss");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("train: temperature must be positive");
  }
  if (threads == 0) throw ConfigError("train: threads must be at least 1");
}

void update_step(ParamMap& params, const ParamMap& grads, OptimizerState& state, const TrainConfig& config) {
  for (const auto& [name, g] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) throw LookupError("update_step: no parameter named '" + name + "'");
    if (it->second.shape() != g.shape()) {
      throw DimensionError("update_step: gradient for '" + name + "' has shape " + shape_string(g.shape()) +
                           ", parameter has " + shape_string(it->second.shape()));
    }
  }
  ++state.step;
  if (config.optimizer == OptimizerKind::sgd) {
    for (const auto& [name, g] : grads) {
      Tensor& p = params.at(name);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = p[i] - config.lr * g[i];
    }
    return;
  }
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [mi, fresh_m] = state.m.try_emplace(name, p.shape());
    auto [vi, fresh_v] = state.v.try_emplace(name, p.shape());
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] = p[i] - config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

std::string TrainReport::loss_curve() const {
  std::ostringstream s;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s initial_loss=%.17g\n", name.c_str(), initial_loss);
  s << buf;
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%s epoch=%zu train_loss=%.17g", name.c_str(), e.epoch, e.train_loss);
    s << buf;
    if (e.val_loss) {
      std::snprintf(buf, sizeof buf, " val_loss=%.17g", *e.val_loss);
      s << buf;
    }
    s << '\n';
  }
  s << name << " best_epoch=" << best_epoch << '\n';
  return s.str();
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Tensor embed_all(const EncoderParams& params, std::span<const Tensor> windows, std::size_t threads) {
  if (windows.empty()) throw InsufficientDataError("embed_all: no windows");
  Tensor out({windows.size(), params.config.out_dim});
  parallel_for(windows.size(), threads, [&](std::size_t i) {
    const Tensor e = encode(params, windows[i]);
    std::copy(e.data().begin(), e.data().end(), out.row(i).begin());
  });
  return out;
}

double contrastive_loss(const EncoderParams& a, std::span<const Tensor> windows, const Tensor& targets,
                        double temperature) {
  return loss_symmetric(embed_all(a, windows), targets, temperature);
}

namespace {

struct SampleTape {
  std::unique_ptr<Tape> tape;
  BoundParams params;
  Var out;
};

/// Forward passes of one side of the batch, each on its own tape.
std::vector<SampleTape> forward_side(const EncoderParams& params, std::span<const Tensor* const> windows,
                                     std::size_t threads, std::optional<std::uint64_t> dropout_seed,
                                     std::uint64_t stream) {
  std::vector<SampleTape> tapes(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t i) {
    SampleTape& s = tapes[i];
    s.tape = std::make_unique<Tape>();
    s.params = bind(*s.tape, params, true);
    EncodeOptions opt;
    if (dropout_seed) {
      opt.train = true;
      opt.dropout_seed = mix_seed(mix_seed(*dropout_seed, stream), i);
    }
    s.out = encode(*s.tape, s.params, params.config, *windows[i], opt);
  });
  return tapes;
}

Tensor stack_outputs(const std::vector<SampleTape>& tapes) {
  const std::size_t D = tapes.front().out.value().size();
  Tensor out({tapes.size(), D});
  for (std::size_t i = 0; i < tapes.size(); ++i) {
    const Tensor& e = tapes[i].out.value();
    std::copy(e.data().begin(), e.data().end(), out.row(i).begin());
  }
  return out;
}

/// Reverse sweeps seeded with each sample's row of `dE`, accumulated into
/// parameter gradients in sample order. Tapes are released as they finish.
ParamMap backward_side(const EncoderParams& params, std::vector<SampleTape>& tapes, const Tensor& dE,
                       std::size_t threads) {
  ParamMap grads;
  for (const auto& [name, t] : params.tensors) grads.emplace(name, Tensor(t.shape()));
  const std::size_t n = tapes.size();
  const std::size_t chunk = std::max<std::size_t>(1, threads);
  std::vector<ParamMap> partial(chunk);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    parallel_for(count, threads, [&](std::size_t k) {
      SampleTape& s = tapes[start + k];
      const std::size_t D = dE.dim(1);
      Tensor seed({D});
      std::copy(dE.row(start + k).begin(), dE.row(start + k).end(), seed.data().begin());
      s.tape->backward(s.out, seed);
      partial[k].clear();
      for (const auto& [name, v] : s.params.vars) partial[k].emplace(name, s.tape->grad(v));
      s.tape.reset();
    });
    for (std::size_t k = 0; k < count; ++k) {
      for (auto& [name, g] : grads) axpy(g, partial[k].at(name));
    }
  }
  return grads;
}

}  // namespace

BatchGradient contrastive_gradient(const EncoderParams& a, std::span<const Tensor* const> windows_a,
                                   const EncoderParams* b, std::span<const Tensor* const> windows_b,
                                   const Tensor* fixed_targets, double temperature, std::size_t threads,
                                   std::optional<std::uint64_t> dropout_seed) {
  if (windows_a.empty()) throw InsufficientDataError("contrastive_gradient: empty batch");
  if ((b == nullptr) == (fixed_targets == nullptr)) {
    throw ContractError("contrastive_gradient: pass either a second encoder or fixed targets");
  }
  auto tapes_a = forward_side(a, windows_a, threads, dropout_seed, 0);
  const Tensor I = stack_outputs(tapes_a);
  BatchGradient out;
  if (b) {
    if (windows_b.size() != windows_a.size()) throw DimensionError("contrastive_gradient: unpaired batch");
    auto tapes_b = forward_side(*b, windows_b, threads, dropout_seed, 1);
    const Tensor M = stack_outputs(tapes_b);
    const LossGrad lg = loss_grad(I, M, temperature);
    out.loss = lg.loss;
    out.grads_a = backward_side(a, tapes_a, lg.dI, threads);
    out.grads_b = backward_side(*b, tapes_b, lg.dM, threads);
  } else {
    const LossGrad lg = loss_grad(I, *fixed_targets, temperature);
    out.loss = lg.loss;
    out.grads_a = backward_side(a, tapes_a, lg.dI, threads);
  }
  return out;
}

namespace {

/// One or two trainable encoders; side b is absent when targets are fixed.
struct LoopData {
  const std::vector<Tensor>* a = nullptr;
  const std::vector<Tensor>* b = nullptr;
  const Tensor* targets = nullptr;
  std::size_t size() const { return a->size(); }
};

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
  Tensor out({idx.size(), t.dim(1)});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(t.row(idx[i]).begin(), t.row(idx[i]).end(), out.row(i).begin());
  }
  return out;
}

void check_pairs(const LoopData& d, const char* what) {
  if (d.b && d.b->size() != d.a->size()) {
    throw ContractError(std::string(what) + ": paired window lists differ in length");
  }
  if (d.targets) {
    if (d.targets->rank() != 2 || d.targets->dim(0) != d.a->size()) {
      throw ContractError(std::string(what) + ": one target row per window is required");
    }
  }
}

double eval_loss(const EncoderParams& a, const EncoderParams* b, const LoopData& d, double tau,
                 std::size_t threads) {
  const Tensor I = embed_all(a, *d.a, threads);
  const Tensor M = b ? embed_all(*b, *d.b, threads) : *d.targets;
  return loss_symmetric(I, M, tau);
}

void save_params(const EncoderParams& p, const fs::path& path, const std::string& meta) {
  write_checkpoint(p.to_checkpoint(meta), path);
}

struct LoopResult {
  EncoderParams a;
  std::optional<EncoderParams> b;
  TrainReport report;
};

LoopResult run_training(EncoderParams a, std::optional<EncoderParams> b, const LoopData& train,
                        const std::optional<LoopData>& val, const TrainConfig& cfg, const std::string& name) {
  cfg.validate();
  a.validate();
  if (b) b->validate();
  check_pairs(train, "train");
  if (val) check_pairs(*val, "validation");
  const std::size_t n = train.size();
  if (n < cfg.batch_size) {
    throw ConfigError("train: " + std::to_string(n) + " training pairs cannot fill one batch of " +
                      std::to_string(cfg.batch_size));
  }
  const bool use_val = val && val->size() >= 2;
  if (val && !use_val) log::warn("train: validation split has fewer than 2 pairs; selection uses the last epoch");
  const std::size_t batches = n / cfg.batch_size;

  std::ofstream log_file;
  if (!cfg.run_dir.empty()) {
    fs::create_directories(cfg.run_dir);
    log_file.open(cfg.run_dir / (name + ".log"), std::ios::trunc);
    if (!log_file) throw ConfigError("train: cannot write log in " + cfg.run_dir.string());
    log_file << "# epoch\ttrain_loss\tval_loss\telapsed_s\n";
  }
  const auto t0 = std::chrono::steady_clock::now();

  auto epoch_order = [&](std::size_t epoch) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed(cfg.seed, epoch));
    rng.shuffle(perm);
    return perm;
  };
  auto batch_targets = [&](std::span<const std::size_t> idx) { return gather_rows(*train.targets, idx); };

  TrainReport report;
  report.name = name;
  {
    // Initial loss: the first epoch's batches under the initial parameters.
    const std::vector<std::size_t> perm = epoch_order(1);
    const Tensor I = embed_all(a, *train.a, cfg.threads);
    const Tensor M = b ? embed_all(*b, *train.b, cfg.threads) : *train.targets;
    double total = 0.0;
    for (std::size_t k = 0; k < batches; ++k) {
      const std::span<const std::size_t> idx(perm.data() + k * cfg.batch_size, cfg.batch_size);
      total += loss_symmetric(gather_rows(I, idx), gather_rows(M, idx), cfg.temperature);
    }
    report.initial_loss = total / static_cast<double>(batches);
  }

  OptimizerState state_a, state_b;
  EncoderParams best_a = a;
  std::optional<EncoderParams> best_b = b;
  const std::string stem = (cfg.run_dir / name).string();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> perm = epoch_order(epoch);
    double total = 0.0;
    for (std::size_t k = 0; k < batches; ++k) {
      const std::span<const std::size_t> idx(perm.data() + k * cfg.batch_size, cfg.batch_size);
      std::vector<const Tensor*> wa, wb;
      for (auto i : idx) {
        wa.push_back(&(*train.a)[i]);
        if (b) wb.push_back(&(*train.b)[i]);
      }
      BatchGradient g;
      try {
        const std::optional<Tensor> targets = b ? std::nullopt : std::optional<Tensor>(batch_targets(idx));
        g = contrastive_gradient(a, wa, b ? &*b : nullptr, wb, targets ? &*targets : nullptr, cfg.temperature,
                                 cfg.threads, mix_seed(mix_seed(cfg.seed, 1000 + epoch), k));
      } catch (const NumericError& e) {
        throw TrainingError(std::string("train: ") + e.what(), epoch, k);
      }
      if (!std::isfinite(g.loss)) throw TrainingError("train: non-finite loss", epoch, k);
      update_step(a.tensors, g.grads_a, state_a, cfg);
      if (b) update_step(b->tensors, g.grads_b, state_b, cfg);
      total += g.loss;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = total / static_cast<double>(batches);
    if (use_val) {
      try {
        stats.val_loss = eval_loss(a, b ? &*b : nullptr, *val, cfg.temperature, cfg.threads);
      } catch (const NumericError& e) {
        throw TrainingError(std::string("validation: ") + e.what(), epoch, batches);
      }
      if (!std::isfinite(*stats.val_loss)) throw TrainingError("validation: non-finite loss", epoch, batches);
    }
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(stats);

    const bool improved = !use_val || !report.best_val_loss || *stats.val_loss < *report.best_val_loss;
    const std::string meta = json{{"name", name}, {"epoch", epoch}, {"seed", cfg.seed}}.dump();
    if (improved) {
      report.best_epoch = epoch;
      report.best_val_loss = stats.val_loss;
      best_a = a;
      best_b = b;
      if (!cfg.run_dir.empty()) {
        report.checkpoint_path = b ? fs::path(stem + ".a.best.ckpt") : fs::path(stem + ".best.ckpt");
        save_params(a, report.checkpoint_path, meta);
        if (b) save_params(*b, stem + ".b.best.ckpt", meta);
      }
    }
    if (!cfg.run_dir.empty() && cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0) {
      const std::string e = ".epoch" + std::to_string(epoch) + ".ckpt";
      save_params(a, b ? stem + ".a" + e : stem + e, meta);
      if (b) save_params(*b, stem + ".b" + e, meta);
    }
    if (log_file) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.3f\n", epoch, stats.train_loss,
                    stats.val_loss.value_or(std::nan("")), stats.seconds);
      log_file << buf << std::flush;
    }
  }
  if (cfg.epochs == 0 && !cfg.run_dir.empty()) {
    report.checkpoint_path = b ? fs::path(stem + ".a.best.ckpt") : fs::path(stem + ".best.ckpt");
    const std::string meta = json{{"name", name}, {"epoch", 0}, {"seed", cfg.seed}}.dump();
    save_params(a, report.checkpoint_path, meta);
    if (b) save_params(*b, stem + ".b.best.ckpt", meta);
  }
  return LoopResult{std::move(best_a), std::move(best_b), std::move(report)};
}

}  // namespace

TrainResult train_pair(EncoderParams trainee, const PairedData& train, const std::optional<PairedData>& val,
                       const TrainConfig& config, const std::string& name) {
  LoopData t{&train.windows, nullptr, &train.targets};
  std::optional<LoopData> v;
  if (val) v = LoopData{&val->windows, nullptr, &val->targets};
  LoopResult r = run_training(std::move(trainee), std::nullopt, t, v, config, name);
  return TrainResult{std::move(r.a), std::move(r.report)};
}

JointResult train_joint(EncoderParams a, EncoderParams b, const JointData& train, const std::optional<JointData>& val,
                        const TrainConfig& config, const std::string& name) {
  LoopData t{&train.a, &train.b, nullptr};
  std::optional<LoopData> v;
  if (val) v = LoopData{&val->a, &val->b, nullptr};
  LoopResult r = run_training(std::move(a), std::move(b), t, v, config, name);
  return JointResult{std::move(r.a), std::move(*r.b), std::move(r.report)};
}

ProgressiveResult train_progressive(EncoderParams imu, EncoderParams mocap, const ProgressiveData& data,
                                    const TrainConfig& stage1, const TrainConfig& stage2) {
  if (imu.config.modality != Modality::imu || mocap.config.modality != Modality::mocap) {
    throw ContractError("train_progressive: expects an IMU encoder and a mocap encoder");
  }
  ProgressiveResult out;
  TrainResult s1 = train_pair(std::move(imu), data.stage1_train, data.stage1_val, stage1, "stage1_imu");
  out.imu = std::move(s1.params);
  out.stage1 = std::move(s1.report);
  out.imu_checksum_before_stage2 = out.imu.checksum();

  // Stage 2: the IMU encoder is frozen, so its embeddings are fixed targets.
  PairedData train{data.stage2_train.a, embed_all(out.imu, data.stage2_train.b, stage2.threads)};
  std::optional<PairedData> val;
  if (data.stage2_val) val = PairedData{data.stage2_val->a, embed_all(out.imu, data.stage2_val->b, stage2.threads)};
  TrainResult s2 = train_pair(std::move(mocap), train, val, stage2, "stage2_mocap");
  out.mocap = std::move(s2.params);
  out.stage2 = std::move(s2.report);
  out.imu_checksum_after_stage2 = out.imu.checksum();
  return out;
}

}  // namespace aura
