// aura: preprocessing, training and evaluation from the command line.
//
//   aura preprocess --format synthetic --classes 8 --per-class 64 --seed 0 --out runs/synth
//   aura train --data runs/synth --pair text-imu --encoder transformer --seed 0
//   aura eval --data runs/synth --checkpoint runs/train-text-imu-transformer/imu.ckpt --task retrieval
//   aura compare --seed 0
//
// Exit codes: 0 success, 2 usage or configuration, 3 numeric failure,
// 4 artifact mismatch.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aura/data_io.hpp"
#include "aura/error.hpp"
#include "aura/experiment.hpp"
#include "aura/ingest.hpp"
#include "aura/log.hpp"
#include "aura/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace aura;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitArtifact = 4;

/// Raised for inconsistencies between a checkpoint and the data it meets.
struct ArtifactMismatch : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Options shared by several commands
// ---------------------------------------------------------------------------

struct Common {
  std::string run_dir = "runs";
  std::string name;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

struct ModelOptions {
  std::size_t out_dim = 0;  // 0 = dataset embedding width
  std::size_t imu_patch = 20;
  std::size_t mocap_patch = 5;
  std::size_t model_dim = 128;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t mlp_dim = 256;
  double dropout = 0.1;
  std::vector<std::size_t> widths{32, 64, 128};
  std::size_t kernel = 5;
  std::size_t stride = 2;
  std::size_t groups = 8;
  std::size_t hidden = 128;

  EncoderConfig build(EncoderKind kind, Modality m, std::size_t dim) const {
    EncoderConfig c = EncoderConfig::make(kind, m);
    c.out_dim = out_dim ? out_dim : dim;
    c.transformer.patch_len = m == Modality::imu ? imu_patch : mocap_patch;
    c.transformer.model_dim = model_dim;
    c.transformer.heads = heads;
    c.transformer.layers = layers;
    c.transformer.mlp_dim = mlp_dim;
    c.transformer.dropout = dropout;
    c.rnn.widths = widths;
    c.rnn.kernel = kernel;
    c.rnn.stride = stride;
    c.rnn.groups = groups;
    c.rnn.hidden = hidden;
    c.validate();
    return c;
  }
};

struct OptimOptions {
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::string optimizer = "adam";
  double temperature = 0.1;
  std::size_t checkpoint_every = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--run-dir", c.run_dir, "Parent directory of run directories")->envname("AURA_RUN_DIR");
  cmd->add_option("--name", c.name, "Run directory name (default depends on the command)");
  cmd->add_option("--threads", c.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "Seed for every random choice");
}

void add_model(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--out-dim", m.out_dim, "Embedding width (0 = dataset width)");
  cmd->add_option("--imu-patch", m.imu_patch, "Transformer patch length for IMU")->check(CLI::PositiveNumber);
  cmd->add_option("--mocap-patch", m.mocap_patch, "Transformer patch length for mocap")->check(CLI::PositiveNumber);
  cmd->add_option("--model-dim", m.model_dim, "Transformer width")->check(CLI::PositiveNumber);
  cmd->add_option("--heads", m.heads, "Attention heads")->check(CLI::PositiveNumber);
  cmd->add_option("--layers", m.layers, "Transformer blocks")->check(CLI::PositiveNumber);
  cmd->add_option("--mlp-dim", m.mlp_dim, "Transformer MLP width")->check(CLI::PositiveNumber);
  cmd->add_option("--dropout", m.dropout, "Dropout probability")->check(CLI::Range(0.0, 0.99));
  cmd->add_option("--widths", m.widths, "RNN convolution widths")->delimiter(',');
  cmd->add_option("--kernel", m.kernel, "RNN convolution kernel")->check(CLI::PositiveNumber);
  cmd->add_option("--stride", m.stride, "RNN convolution stride")->check(CLI::PositiveNumber);
  cmd->add_option("--groups", m.groups, "RNN group-norm groups")->check(CLI::PositiveNumber);
  cmd->add_option("--hidden", m.hidden, "GRU hidden width")->check(CLI::PositiveNumber);
}

void add_optim(CLI::App* cmd, OptimOptions& o) {
  cmd->add_option("--batch-size", o.batch_size, "Pairs per batch")->check(CLI::Range(2, 1 << 20));
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--optimizer", o.optimizer, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}));
  cmd->add_option("--temperature", o.temperature, "Contrastive temperature")->check(CLI::PositiveNumber);
  cmd->add_option("--checkpoint-every", o.checkpoint_every, "Epoch checkpoint interval (0 = best only)");
}

TrainConfig train_config(const OptimOptions& o, const Common& c, std::uint64_t stream, const fs::path& dir) {
  TrainConfig t;
  t.batch_size = o.batch_size;
  t.epochs = o.epochs;
  t.lr = o.lr;
  t.optimizer = parse_optimizer(o.optimizer);
  t.temperature = o.temperature;
  t.checkpoint_every = o.checkpoint_every;
  t.threads = c.threads;
  t.seed = mix_seed(c.seed, stream);
  t.run_dir = dir;
  t.validate();
  return t;
}

fs::path make_run_dir(const Common& c, const std::string& fallback) {
  const fs::path dir = fs::path(c.run_dir) / (c.name.empty() ? fallback : c.name);
  fs::create_directories(dir);
  return dir;
}

/// The subcommand's fully resolved options as an INI section, loadable
/// again with --config.
void echo_config(const CLI::App& cmd, const fs::path& dir) {
  std::ofstream f(dir / "config.ini", std::ios::trunc);
  f << "[" << cmd.get_name() << "]\n" << cmd.config_to_str(true, false);
}

Dataset load_dataset(const std::string& dir) {
  if (!fs::is_regular_file(fs::path(dir) / "manifest.txt")) {
    throw ConfigError("--data: no dataset manifest in " + dir);
  }
  return read_dataset(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

struct PreprocessOptions {
  std::string format;
  std::vector<std::string> inputs;
  std::string out;
  std::size_t classes = 8;
  std::size_t per_class = 64;
  double noise = 0.3;
  std::size_t embedding_dim = 512;
  std::string accel = "16g";
  std::string subject = "subject101";
  double stride_s = 0.0;
};

std::string split_summary(const Dataset& ds) {
  std::ostringstream s;
  s << "split\twindows\timu\tmocap\ttext\tvideo\tlabeled\n";
  for (Split sp : {Split::train, Split::val, Split::test}) {
    std::size_t imu = 0, mocap = 0, text = 0, video = 0, labeled = 0;
    const auto recs = ds.split(sp);
    for (const auto* r : recs) {
      imu += r->imu.has_value();
      mocap += r->mocap.has_value();
      text += r->text.has_value();
      video += r->video_emb.has_value();
      labeled += r->label.has_value();
    }
    s << to_string(sp) << '\t' << recs.size() << '\t' << imu << '\t' << mocap << '\t' << text << '\t' << video << '\t'
      << labeled << '\n';
  }
  return s.str();
}

int run_preprocess(const CLI::App& app, const PreprocessOptions& o, const Common& c) {
  Dataset ds;
  if (o.format == "synthetic") {
    SyntheticSpec spec;
    spec.n_classes = o.classes;
    spec.pairs_per_class = o.per_class;
    spec.noise_level = o.noise;
    spec.embedding_dim = o.embedding_dim;
    spec.seed = c.seed;
    ds = gen_synthetic(spec);
  } else if (o.format == "pamap2") {
    if (o.inputs.empty()) throw ConfigError("preprocess: --in is required for --format pamap2");
    Pamap2Options p;
    p.accel = o.accel == "6g" ? Pamap2Accel::range6g : Pamap2Accel::range16g;
    if (o.stride_s > 0) p.stride_s = o.stride_s;
    if (o.inputs.size() == 1) {
      std::ifstream in(o.inputs[0]);
      if (!in) throw ConfigError("preprocess: cannot open --in " + o.inputs[0]);
      p.subject = o.subject;
      ds = ingest_pamap2(in, p);
    } else {
      ds = ingest_pamap2(std::vector<fs::path>(o.inputs.begin(), o.inputs.end()), p);
    }
  } else {
    if (o.inputs.size() != 1) throw ConfigError("preprocess: --in must name one directory for --format windows");
    ds = ingest_windows(o.inputs[0]);
  }
  write_dataset(ds, o.out);
  echo_config(app, o.out);
  std::cout << "dataset=" << ds.name << "\nlabels=" << ds.labels.size() << "\nrecords=" << ds.records.size() << "\n"
            << split_summary(ds);
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string pair = "text-imu";
  std::string encoder = "transformer";
  std::string mocap_encoder = "same";  // "same" = --encoder
  std::string anchor = "text";  // stage-1 anchor for --progressive
  std::string imu_checkpoint;  // frozen IMU encoder for mocap-imu
  bool progressive = false;
  bool independent = false;
  ModelOptions model;
  OptimOptions optim;
};

/// Metadata stored next to every encoder checkpoint; eval reads it back.
json run_metadata(const Dataset& ds, const std::string& role, const std::string& pair, const std::string& anchor,
                  std::uint64_t seed) {
  return json{{"role", role},          {"pair", pair},
              {"anchor", anchor},      {"anchor_seed", seed},
              {"dataset", ds.name},    {"labels", ds.labels},
              {"embedding_dim", ds.embedding_dim}};
}

void save_encoder(const EncoderParams& p, const json& meta, const fs::path& path) {
  write_checkpoint(p.to_checkpoint(meta.dump()), path);
}

EncoderParams load_encoder(const fs::path& path, Modality expected) {
  if (!fs::is_regular_file(path)) throw ConfigError("checkpoint file does not exist: " + path.string());
  EncoderParams p = EncoderParams::from_checkpoint(read_checkpoint(path));
  if (p.config.modality != expected) {
    throw ArtifactMismatch("checkpoint " + path.string() + " holds a " + to_string(p.config.modality) +
                           " encoder, expected " + to_string(expected));
  }
  return p;
}

json checkpoint_metadata(const fs::path& path) {
  const json meta = json::parse(read_checkpoint(path).metadata);
  return meta.value("extra", json::object());
}

/// Fixed targets for IMU training against an anchor.
Tensor anchor_targets(const SplitView& v, const std::string& anchor, const FrozenAnchor& text, std::size_t dim) {
  if (anchor == "video") {
    Tensor t = stack(v.video);
    if (t.dim(1) != dim) {
      throw ConfigError("train: video embeddings have width " + std::to_string(t.dim(1)) + " but --out-dim is " +
                        std::to_string(dim));
    }
    return l2_normalize_rows(t);
  }
  return embed_texts(text, v.texts);
}

int run_train(const CLI::App& app, const TrainOptions& o, const Common& c) {
  if (o.progressive && o.independent) throw ConfigError("train: --progressive and --independent exclude each other");
  if ((o.progressive || o.independent) && o.pair != "mocap-imu") {
    throw ConfigError("train: --progressive and --independent apply to --pair mocap-imu");
  }
  if (o.pair == "mocap-imu" && !o.progressive && !o.independent && o.imu_checkpoint.empty()) {
    throw ConfigError("train: --pair mocap-imu needs --progressive, --independent or --imu-checkpoint");
  }
  const EncoderKind imu_kind = parse_encoder_kind(o.encoder);
  const EncoderKind mocap_kind = parse_encoder_kind(o.mocap_encoder == "same" ? o.encoder : o.mocap_encoder);
  const Dataset ds = load_dataset(o.data);
  const EncoderConfig imu_cfg = o.model.build(imu_kind, Modality::imu, ds.embedding_dim);
  const EncoderConfig mocap_cfg = o.model.build(mocap_kind, Modality::mocap, ds.embedding_dim);
  const fs::path dir = make_run_dir(c, "train-" + o.pair + "-" + o.encoder + (o.progressive ? "-progressive" : ""));
  const TrainConfig stage1 = train_config(o.optim, c, 11, dir);
  const TrainConfig stage2 = train_config(o.optim, c, 12, dir);
  echo_config(app, dir);

  const std::string anchor = o.pair == "video-imu" ? "video" : o.pair == "text-imu" ? "text" : o.anchor;
  const FrozenAnchor text = text_anchor(c.seed, imu_cfg.out_dim);
  Needs needs{.imu = true};
  needs.text = anchor == "text" && o.pair != "mocap-imu";
  needs.video = anchor == "video" && o.pair != "mocap-imu";
  if (o.pair == "mocap-imu") {
    needs.mocap = true;
    if (o.progressive) (anchor == "video" ? needs.video : needs.text) = true;
  }
  const SplitView train = select(ds, Split::train, needs);
  const SplitView val = select(ds, Split::val, needs);
  if (train.size() == 0) throw InsufficientDataError("train: no training records carry the needed modalities");
  const std::optional<SplitView> val_view = val.size() >= 2 ? std::optional(val) : std::nullopt;

  EncoderParams imu = init_params(imu_cfg, mix_seed(c.seed, 1));
  imu.input_stats = training_stats(train.imu, Modality::imu);
  EncoderParams mocap = init_params(mocap_cfg, mix_seed(c.seed, 3));
  if (needs.mocap) mocap.input_stats = training_stats(train.mocap, Modality::mocap);

  std::string report;
  auto record = [&](const TrainReport& r) {
    write_text(dir / (r.name + ".curve.tsv"), r.loss_curve());
    report += r.loss_curve();
  };
  auto paired = [&](const EncoderParams& p, const SplitView& v, bool mocap_side) {
    return PairedData{prepare_all(p, mocap_side ? v.mocap : v.imu), anchor_targets(v, anchor, text, p.config.out_dim)};
  };

  if (o.pair != "mocap-imu") {
    std::optional<PairedData> v;
    if (val_view) v = paired(imu, *val_view, false);
    const TrainResult r = train_pair(imu, paired(imu, train, false), v, stage1, "imu_" + anchor);
    record(r.report);
    save_encoder(r.params, run_metadata(ds, "imu", o.pair, anchor, c.seed), dir / "imu.ckpt");
  } else if (o.progressive) {
    ProgressiveData d;
    d.stage1_train = paired(imu, train, false);
    d.stage2_train = {prepare_all(mocap, train.mocap), prepare_all(imu, train.imu)};
    if (val_view) {
      d.stage1_val = paired(imu, *val_view, false);
      d.stage2_val = JointData{prepare_all(mocap, val_view->mocap), prepare_all(imu, val_view->imu)};
    }
    const ProgressiveResult r = train_progressive(imu, mocap, d, stage1, stage2);
    record(r.stage1);
    record(r.stage2);
    report += "imu_checksum_before_stage2=" + std::to_string(r.imu_checksum_before_stage2) +
              "\nimu_checksum_after_stage2=" + std::to_string(r.imu_checksum_after_stage2) + "\n";
    save_encoder(r.imu, run_metadata(ds, "imu", o.pair, anchor, c.seed), dir / "imu.ckpt");
    save_encoder(r.mocap, run_metadata(ds, "mocap", o.pair, anchor, c.seed), dir / "mocap.ckpt");
  } else if (o.independent) {
    JointData t{prepare_all(mocap, train.mocap), prepare_all(imu, train.imu)};
    std::optional<JointData> v;
    if (val_view) v = JointData{prepare_all(mocap, val_view->mocap), prepare_all(imu, val_view->imu)};
    const JointResult r = train_joint(mocap, imu, t, v, stage1, "mocap_imu_joint");
    record(r.report);
    save_encoder(r.b, run_metadata(ds, "imu", o.pair, "none", c.seed), dir / "imu.ckpt");
    save_encoder(r.a, run_metadata(ds, "mocap", o.pair, "none", c.seed), dir / "mocap.ckpt");
  } else {
    const EncoderParams frozen = load_encoder(o.imu_checkpoint, Modality::imu);
    if (frozen.config.out_dim != mocap_cfg.out_dim) {
      throw ArtifactMismatch("train: IMU checkpoint width " + std::to_string(frozen.config.out_dim) +
                             " differs from the mocap encoder width " + std::to_string(mocap_cfg.out_dim));
    }
    const json meta = checkpoint_metadata(o.imu_checkpoint);
    auto stage = [&](const SplitView& v) {
      return PairedData{prepare_all(mocap, v.mocap), embed_all(frozen, prepare_all(frozen, v.imu), c.threads)};
    };
    std::optional<PairedData> v;
    if (val_view) v = stage(*val_view);
    const TrainResult r = train_pair(mocap, stage(train), v, stage2, "stage2_mocap");
    record(r.report);
    const std::uint64_t anchor_seed = meta.value("anchor_seed", c.seed);
    save_encoder(frozen, run_metadata(ds, "imu", o.pair, meta.value("anchor", "text"), anchor_seed), dir / "imu.ckpt");
    save_encoder(r.params, run_metadata(ds, "mocap", o.pair, meta.value("anchor", "text"), anchor_seed),
                 dir / "mocap.ckpt");
  }
  write_text(dir / "train_report.txt", report);
  std::cout << report << "run_dir=" << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string data;
  std::string checkpoint;
  std::string mocap_checkpoint;
  bool untrained = false;
  std::string encoder = "transformer";
  std::string task = "retrieval";
  std::string regime = "all";
  std::string split = "test";
  std::vector<std::size_t> ks{1, 10, 50};
  std::size_t show_top_k = 0;
  std::string head = "probe";
  ModelOptions model;
  ProbeConfig probe;
  FinetuneConfig finetune;
};

struct LoadedImu {
  EncoderParams params;
  std::uint64_t anchor_seed = 0;
};

LoadedImu imu_for_eval(const EvalOptions& o, const Common& c, const Dataset& ds) {
  if (o.untrained) {
    if (!o.checkpoint.empty()) throw ConfigError("eval: --untrained and --checkpoint exclude each other");
    const EncoderConfig cfg = o.model.build(parse_encoder_kind(o.encoder), Modality::imu, ds.embedding_dim);
    LoadedImu out{init_params(cfg, mix_seed(c.seed, 1)), c.seed};
    const SplitView train = select(ds, Split::train, Needs{.imu = true});
    if (train.size() == 0) throw InsufficientDataError("eval: no training IMU windows for input statistics");
    out.params.input_stats = training_stats(train.imu, Modality::imu);
    return out;
  }
  if (o.checkpoint.empty()) throw ConfigError("eval: --checkpoint or --untrained is required");
  LoadedImu out{load_encoder(o.checkpoint, Modality::imu), c.seed};
  const json meta = checkpoint_metadata(o.checkpoint);
  out.anchor_seed = meta.value("anchor_seed", c.seed);
  if (meta.contains("labels") && meta["labels"].get<std::vector<std::string>>() != ds.labels) {
    throw ArtifactMismatch("eval: checkpoint was trained with a different label set than " + ds.name);
  }
  if (out.params.input_stats && out.params.input_stats->channels() != window_shape(Modality::imu)[0]) {
    throw ArtifactMismatch("eval: checkpoint input statistics do not match IMU windows");
  }
  return out;
}

int run_eval(const CLI::App& app, const EvalOptions& o, const Common& c) {
  const Dataset ds = load_dataset(o.data);
  const Split split = parse_split(o.split);
  const LoadedImu imu = imu_for_eval(o, c, ds);
  const std::size_t dim = imu.params.config.out_dim;
  const FrozenAnchor text = text_anchor(imu.anchor_seed, dim);
  const fs::path dir = make_run_dir(c, "eval-" + o.task);
  echo_config(app, dir);
  std::map<std::string, std::string> reports;

  if (o.task == "retrieval") {
    std::vector<RetrievalReport> results;
    std::string listings;
    auto both = [&](const Tensor& a, const Tensor& b, const std::string& an, const std::string& bn,
                    const std::vector<std::string>& ids) {
      results.push_back(retrieve(a, b, o.ks, an + "->" + bn));
      results.push_back(retrieve(b, a, o.ks, bn + "->" + an));
      if (o.show_top_k) {
        listings += "# " + an + "->" + bn + "\n" + format_top_k(a, b, o.show_top_k, ids, ids);
        listings += "# " + bn + "->" + an + "\n" + format_top_k(b, a, o.show_top_k, ids, ids);
      }
    };
    const SplitView tv = select(ds, split, Needs{.imu = true, .text = true});
    if (tv.size()) {
      both(embed_all(imu.params, prepare_all(imu.params, tv.imu), c.threads), embed_texts(text, tv.texts), "imu",
           "text", tv.ids);
    }
    const SplitView vv = select(ds, split, Needs{.imu = true, .video = true});
    if (vv.size()) {
      const Tensor video = l2_normalize_rows(stack(vv.video));
      if (video.dim(1) != dim) {
        log::warn("eval: video embeddings have width " + std::to_string(video.dim(1)) +
                  ", the encoder " + std::to_string(dim) + "; skipping imu<->video");
      } else {
        both(embed_all(imu.params, prepare_all(imu.params, vv.imu), c.threads), video, "imu", "video", vv.ids);
      }
    }
    if (!o.mocap_checkpoint.empty()) {
      const EncoderParams mocap = load_encoder(o.mocap_checkpoint, Modality::mocap);
      if (mocap.config.out_dim != dim) throw ArtifactMismatch("eval: mocap and IMU checkpoints differ in width");
      const SplitView mv = select(ds, split, Needs{.imu = true, .mocap = true});
      if (mv.size()) {
        both(embed_all(imu.params, prepare_all(imu.params, mv.imu), c.threads),
             embed_all(mocap, prepare_all(mocap, mv.mocap), c.threads), "imu", "mocap", mv.ids);
      }
    }
    if (results.empty()) throw InsufficientDataError("eval: the split has no modality pairs to retrieve");
    std::string text_report;
    for (const auto& r : results) text_report += format_retrieval(r) + "\n";
    reports["retrieval.txt"] = text_report;
    reports["retrieval.tsv"] = retrieval_table(results);
    if (o.show_top_k) reports["top_k.txt"] = listings;
    std::cout << reports["retrieval.tsv"] << listings;
  } else {
    const Needs needs{.imu = true, .label = true};
    const SplitView train = select(ds, Split::train, needs);
    const SplitView test = select(ds, split, needs);
    if (test.size() == 0) throw InsufficientDataError("eval: no labeled IMU windows in split " + o.split);
    const auto train_w = prepare_all(imu.params, train.imu);
    const auto test_w = prepare_all(imu.params, test.imu);
    const Tensor test_emb = embed_all(imu.params, test_w, c.threads);
    std::vector<HarReport> results;
    const bool all = o.regime == "all";
    if (all || o.regime == "zeroshot") {
      results.push_back(zero_shot_report(test_emb, test.labels, ds.labels, label_anchors(text, ds)));
    }
    std::optional<LinearHead> head;
    if (all || o.regime == "transfer" || (o.regime == "finetune" && o.head == "probe")) {
      if (train.size() == 0) throw InsufficientDataError("eval: no labeled training windows for the probe");
      ProbeConfig pc = o.probe;
      pc.seed = mix_seed(c.seed, 21);
      head = train_linear_head(embed_all(imu.params, train_w, c.threads), train.labels, ds.labels.size(), pc);
      std::vector<std::size_t> preds;
      for (std::size_t i = 0; i < test_emb.dim(0); ++i) preds.push_back(head->predict(test_emb.row(i)));
      if (all || o.regime == "transfer") {
        results.push_back(make_har_report(Regime::transfer, std::move(preds), test.labels, ds.labels));
      }
    }
    if (all || o.regime == "finetune") {
      FinetuneConfig fc = o.finetune;
      fc.seed = mix_seed(c.seed, 22);
      fc.threads = c.threads;
      if (o.head != "probe") head.reset();
      results.push_back(
          finetune_classify(imu.params, train_w, train.labels, test_w, test.labels, ds.labels, fc, head).report);
    }
    const std::string name = o.untrained ? o.encoder + " (untrained)" : o.encoder;
    std::string text_report;
    std::vector<std::pair<std::string, HarReport>> rows;
    for (const auto& r : results) {
      text_report += format_har(r, to_string(imu.params.config.kind)) + "\n";
      rows.emplace_back(to_string(imu.params.config.kind), r);
    }
    reports["har.txt"] = text_report;
    reports["har.tsv"] = har_table(rows);
    std::cout << reports["har.tsv"];
  }
  write_reports(reports, dir);
  std::cout << "run_dir=" << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareOptions {
  std::size_t classes = 8;
  std::size_t per_class = 64;
  double noise = 0.3;
  std::size_t stage1_epochs = 0;
  std::size_t stage2_epochs = 0;
  std::size_t finetune_epochs = 0;
  bool random_init = false;
};

int run_compare(const CLI::App& app, const CompareOptions& o, const Common& c) {
  BenchmarkConfig b = BenchmarkConfig::standard();
  b.seed = c.seed;
  b.data.n_classes = o.classes;
  b.data.pairs_per_class = o.per_class;
  b.data.noise_level = o.noise;
  if (o.stage1_epochs) b.stage1.epochs = o.stage1_epochs;
  if (o.stage2_epochs) b.stage2.epochs = o.stage2_epochs;
  if (o.finetune_epochs) b.finetune.epochs = o.finetune_epochs;
  b.random_init_rows = o.random_init;
  b.threads = c.threads;
  b.validate();
  b.run_dir = make_run_dir(c, "compare");
  echo_config(app, b.run_dir);
  const BenchmarkResult r = run_benchmark(b);
  std::cout << r.reports.at("comparison.tsv") << "\n" << r.reports.at("retrieval.tsv") << "run_dir=" << b.run_dir.string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal IMU / mocap / text alignment: preprocessing, training and evaluation"};
  app.set_config("--config", "", "INI file with option values; command-line flags override it");
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  Common common;
  PreprocessOptions pre;
  auto* preprocess = app.add_subcommand("preprocess", "Write a dataset directory");
  add_common(preprocess, common);
  preprocess->add_option("--format", pre.format, "synthetic, pamap2 or windows")
      ->required()
      ->check(CLI::IsMember({"synthetic", "pamap2", "windows"}));
  preprocess->add_option("--in", pre.inputs, "Input file(s) or directory");
  preprocess->add_option("--out", pre.out, "Output dataset directory")->required();
  preprocess->add_option("--classes", pre.classes, "Synthetic classes")->check(CLI::Range(2, 1 << 16));
  preprocess->add_option("--per-class", pre.per_class, "Synthetic pairs per class")->check(CLI::PositiveNumber);
  preprocess->add_option("--noise", pre.noise, "Synthetic noise level")->check(CLI::Range(0.0, 1.0));
  preprocess->add_option("--embedding-dim", pre.embedding_dim, "Synthetic video embedding width")
      ->check(CLI::PositiveNumber);
  preprocess->add_option("--accel", pre.accel, "PAMAP2 chest accelerometer range")->check(CLI::IsMember({"16g", "6g"}));
  preprocess->add_option("--subject", pre.subject, "PAMAP2 subject id for a single input");
  preprocess->add_option("--stride", pre.stride_s, "PAMAP2 window stride in seconds (default: window length)");

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "Contrastive alignment training");
  add_common(train, common);
  add_model(train, tr.model);
  add_optim(train, tr.optim);
  train->add_option("--data", tr.data, "Dataset directory")->required();
  train->add_option("--pair", tr.pair, "Modality pair")->check(CLI::IsMember({"text-imu", "video-imu", "mocap-imu"}));
  train->add_option("--encoder", tr.encoder, "IMU encoder")->check(CLI::IsMember({"transformer", "rnn"}));
  train->add_option("--mocap-encoder", tr.mocap_encoder, "Mocap encoder (same = --encoder)")
      ->check(CLI::IsMember({"same", "transformer", "rnn"}));
  train->add_option("--anchor", tr.anchor, "Stage-1 anchor with --progressive")->check(CLI::IsMember({"text", "video"}));
  train->add_option("--imu-checkpoint", tr.imu_checkpoint, "Frozen IMU encoder for --pair mocap-imu");
  train->add_flag("--progressive", tr.progressive, "IMU against the anchor, then mocap against the frozen IMU encoder");
  train->add_flag("--independent", tr.independent, "Train mocap and IMU encoders jointly without an anchor");

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "Retrieval and activity recognition reports");
  add_common(eval, common);
  add_model(eval, ev.model);
  eval->add_option("--data", ev.data, "Dataset directory")->required();
  eval->add_option("--checkpoint", ev.checkpoint, "IMU encoder checkpoint");
  eval->add_option("--mocap-checkpoint", ev.mocap_checkpoint, "Mocap encoder checkpoint");
  eval->add_flag("--untrained", ev.untrained, "Evaluate a freshly initialized IMU encoder");
  eval->add_option("--encoder", ev.encoder, "Encoder kind with --untrained")
      ->check(CLI::IsMember({"transformer", "rnn"}));
  eval->add_option("--task", ev.task, "retrieval or har")->check(CLI::IsMember({"retrieval", "har"}));
  eval->add_option("--regime", ev.regime, "HAR regime")
      ->check(CLI::IsMember({"zeroshot", "transfer", "finetune", "all"}));
  eval->add_option("--split", ev.split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--ks", ev.ks, "Recall cut-offs")->delimiter(',')->check(CLI::PositiveNumber);
  eval->add_option("--show-top-k", ev.show_top_k, "List the top-k retrieved items per query");
  eval->add_option("--head", ev.head, "Fine-tuning head start: probe or fresh")->check(CLI::IsMember({"probe", "fresh"}));
  eval->add_option("--probe-epochs", ev.probe.epochs, "Linear-probe steps");
  eval->add_option("--probe-lr", ev.probe.lr, "Linear-probe learning rate")->check(CLI::PositiveNumber);
  eval->add_option("--finetune-epochs", ev.finetune.epochs, "Fine-tuning epochs");
  eval->add_option("--finetune-batch-size", ev.finetune.batch_size, "Fine-tuning batch size")->check(CLI::PositiveNumber);
  eval->add_option("--finetune-lr", ev.finetune.lr, "Fine-tuning learning rate")->check(CLI::PositiveNumber);

  CompareOptions cmp;
  auto* compare = app.add_subcommand("compare", "Seeded synthetic benchmark: RNN vs transformer across regimes");
  add_common(compare, common);
  compare->add_option("--classes", cmp.classes, "Synthetic classes")->check(CLI::Range(2, 1 << 16));
  compare->add_option("--per-class", cmp.per_class, "Synthetic pairs per class")->check(CLI::PositiveNumber);
  compare->add_option("--noise", cmp.noise, "Synthetic noise level")->check(CLI::Range(0.0, 1.0));
  compare->add_option("--stage1-epochs", cmp.stage1_epochs, "Stage-1 epochs (0 = standard)");
  compare->add_option("--stage2-epochs", cmp.stage2_epochs, "Stage-2 epochs (0 = standard)");
  compare->add_option("--finetune-epochs", cmp.finetune_epochs, "Fine-tuning epochs (0 = standard)");
  compare->add_flag("--random-init", cmp.random_init, "Add fine-tuned randomly initialized encoders");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*preprocess) return run_preprocess(*preprocess, pre, common);
    if (*train) return run_train(*train, tr, common);
    if (*eval) return run_eval(*eval, ev, common);
    return run_compare(*compare, cmp, common);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InsufficientDataError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ArtifactMismatch& e) {
    std::cerr << "artifact mismatch: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const FormatError& e) {
    std::cerr << "artifact mismatch: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const ContractError& e) {
    std::cerr << "artifact mismatch: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const DimensionError& e) {
    std::cerr << "artifact mismatch: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const LookupError& e) {
    std::cerr << "artifact mismatch: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
