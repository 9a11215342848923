#include "aura/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "aura/error.hpp"
#include "aura/log.hpp"
#include "aura/rng.hpp"

namespace aura {

namespace fs = std::filesystem;

SplitView select(const Dataset& ds, Split split, const Needs& needs) {
  std::map<std::string, std::size_t> label_index;
  for (std::size_t c = 0; c < ds.labels.size(); ++c) label_index[ds.labels[c]] = c;
  SplitView v;
  for (const DatasetRecord* r : ds.split(split)) {
    if ((needs.imu && !r->imu) || (needs.mocap && !r->mocap) || (needs.text && !r->text) ||
        (needs.video && !r->video_emb) || (needs.label && !r->label)) {
      continue;
    }
    v.ids.push_back(r->source_id + "@" + std::to_string(r->offset_ms()));
    if (needs.imu) v.imu.push_back(*r->imu);
    if (needs.mocap) v.mocap.push_back(*r->mocap);
    if (needs.text) v.texts.push_back(*r->text);
    if (needs.video) v.video.push_back(*r->video_emb);
    if (needs.label) {
      const auto it = label_index.find(*r->label);
      if (it == label_index.end()) throw FormatError("dataset: record label '" + *r->label + "' is not declared");
      v.labels.push_back(it->second);
    }
  }
  return v;
}

ChannelStats training_stats(std::span<const Tensor> raw_windows, Modality m) {
  if (m == Modality::imu) return compute_channel_stats(raw_windows);
  std::vector<Tensor> flat;
  flat.reserve(raw_windows.size());
  for (const auto& w : raw_windows) flat.push_back(w.rank() == 3 ? w.reshaped({w.dim(0) * w.dim(1), w.dim(2)}) : w);
  return compute_channel_stats(flat);
}

std::vector<Tensor> prepare_all(const EncoderParams& params, std::span<const Tensor> raw_windows) {
  std::vector<Tensor> out;
  out.reserve(raw_windows.size());
  for (const auto& w : raw_windows) out.push_back(prepare_window(params, w));
  return out;
}

Tensor embed_texts(const FrozenAnchor& anchor, std::span<const TextSnippet> texts) {
  if (texts.empty()) throw InsufficientDataError("embed_texts: no texts");
  Tensor out({texts.size(), anchor.dim()});
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const Tensor e = anchor_embed(anchor, texts[i]);
    std::copy(e.data().begin(), e.data().end(), out.row(i).begin());
  }
  return out;
}

Tensor stack(std::span<const Tensor> rows) {
  if (rows.empty()) throw InsufficientDataError("stack: no rows");
  Tensor out({rows.size(), rows.front().size()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw DimensionError("stack: rows differ in width");
    std::copy(rows[i].data().begin(), rows[i].data().end(), out.row(i).begin());
  }
  return out;
}

std::map<std::string, Tensor> label_anchors(const FrozenAnchor& anchor, const Dataset& ds) {
  const WhitespaceTokenizer tokenizer(ds.vocabulary);
  std::map<std::string, Tensor> out;
  for (const auto& label : ds.labels) out[label] = anchor_embed(anchor, encode_text(tokenizer, label));
  return out;
}

FrozenAnchor text_anchor(std::uint64_t seed, std::size_t dim) { return FrozenAnchor::pseudo(mix_seed(seed, 0xa7c4), dim); }

BenchmarkConfig BenchmarkConfig::standard() {
  BenchmarkConfig c;
  c.stage1.epochs = 10;
  c.stage1.temperature = 0.1;
  c.stage2 = c.stage1;
  c.finetune.epochs = 3;
  return c;
}

void BenchmarkConfig::validate() const {
  if (data.n_classes < 2) throw ConfigError("benchmark: data.n_classes must be at least 2");
  if (data.pairs_per_class == 0) throw ConfigError("benchmark: data.pairs_per_class must be positive");
  if (!(data.noise_level >= 0.0 && data.noise_level <= 1.0)) {
    throw ConfigError("benchmark: data.noise_level must lie in [0, 1]");
  }
  if (transformer_imu.kind != EncoderKind::transformer || transformer_imu.modality != Modality::imu) {
    throw ConfigError("benchmark: transformer_imu must be a transformer over IMU windows");
  }
  if (rnn_imu.kind != EncoderKind::rnn || rnn_imu.modality != Modality::imu) {
    throw ConfigError("benchmark: rnn_imu must be an rnn over IMU windows");
  }
  if (mocap.modality != Modality::mocap) throw ConfigError("benchmark: mocap encoder must read mocap windows");
  for (const auto* c : {&transformer_imu, &rnn_imu, &mocap}) {
    c->validate();
    if (c->out_dim != data.embedding_dim) {
      throw ConfigError("benchmark: encoder out_dim " + std::to_string(c->out_dim) + " differs from embedding_dim " +
                        std::to_string(data.embedding_dim));
    }
  }
  stage1.validate();
  stage2.validate();
  if (finetune.batch_size == 0) throw ConfigError("benchmark: finetune.batch_size must be positive");
  if (ks.empty()) throw ConfigError("benchmark: ks must not be empty");
  if (threads == 0) throw ConfigError("benchmark: threads must be at least 1");
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string checksum_hex(std::uint64_t c) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(c));
  return buf;
}

struct HarRun {
  HarReport zeroshot;
  HarReport transfer;
  HarReport finetune;
};

/// Zero-shot, linear probe and (probe-initialized) fine-tuning of one IMU encoder.
HarRun recognize(const EncoderParams& encoder, const std::vector<Tensor>& train_windows,
                 const std::vector<std::size_t>& train_labels, const std::vector<Tensor>& test_windows,
                 const std::vector<std::size_t>& test_labels, const Dataset& ds,
                 const std::map<std::string, Tensor>& anchors, const BenchmarkConfig& cfg, std::uint64_t seed,
                 bool zero_shot) {
  HarRun r;
  const Tensor train_emb = embed_all(encoder, train_windows, cfg.threads);
  const Tensor test_emb = embed_all(encoder, test_windows, cfg.threads);
  if (zero_shot) r.zeroshot = zero_shot_report(test_emb, test_labels, ds.labels, anchors);
  ProbeConfig probe = cfg.probe;
  probe.seed = mix_seed(seed, 1);
  LinearHead head = train_linear_head(train_emb, train_labels, ds.labels.size(), probe);
  std::vector<std::size_t> preds;
  for (std::size_t i = 0; i < test_emb.dim(0); ++i) preds.push_back(head.predict(test_emb.row(i)));
  r.transfer = make_har_report(Regime::transfer, std::move(preds), test_labels, ds.labels);
  FinetuneConfig ft = cfg.finetune;
  ft.seed = mix_seed(seed, 2);
  ft.threads = cfg.threads;
  r.finetune = finetune_classify(encoder, train_windows, train_labels, test_windows, test_labels, ds.labels, ft,
                                 std::move(head))
                   .report;
  return r;
}

std::string comparison_table(const std::vector<EncoderRow>& rows) {
  std::ostringstream s;
  s << "encoder\tzeroshot_f1\tzeroshot_acc\ttransfer_f1\ttransfer_acc\tfinetune_f1\tfinetune_acc\n";
  auto cell = [](const std::optional<HarReport>& r, bool f1) {
    return r ? fixed(f1 ? r->macro_f1 : r->accuracy) : std::string("-");
  };
  for (const auto& row : rows) {
    s << row.name << '\t' << cell(row.zeroshot, true) << '\t' << cell(row.zeroshot, false) << '\t'
      << cell(row.transfer, true) << '\t' << cell(row.transfer, false) << '\t' << fixed(row.finetune.macro_f1) << '\t'
      << fixed(row.finetune.accuracy) << '\n';
  }
  return s.str();
}

}  // namespace

BenchmarkResult run_benchmark(const BenchmarkConfig& config) {
  config.validate();
  BenchmarkConfig cfg = config;
  const std::uint64_t seed = cfg.seed;
  cfg.data.seed = seed;
  cfg.stage1.seed = mix_seed(seed, 11);
  cfg.stage2.seed = mix_seed(seed, 12);
  cfg.stage1.threads = cfg.stage2.threads = cfg.threads;
  if (!cfg.run_dir.empty()) cfg.stage1.run_dir = cfg.stage2.run_dir = cfg.run_dir / "train";

  const Dataset ds = gen_synthetic(cfg.data);
  const Needs needs{.imu = true, .mocap = true, .text = true, .video = false, .label = true};
  const SplitView train = select(ds, Split::train, needs);
  const SplitView val = select(ds, Split::val, needs);
  const SplitView test = select(ds, Split::test, needs);
  const FrozenAnchor anchor = text_anchor(seed, cfg.data.embedding_dim);
  const auto anchors = label_anchors(anchor, ds);
  const ChannelStats imu_stats = training_stats(train.imu, Modality::imu);
  const ChannelStats mocap_stats = training_stats(train.mocap, Modality::mocap);

  auto fresh = [&](const EncoderConfig& c, std::uint64_t stream) {
    EncoderParams p = init_params(c, mix_seed(seed, stream));
    p.input_stats = c.modality == Modality::imu ? imu_stats : mocap_stats;
    return p;
  };

  BenchmarkResult out;

  // Transformer: both stages.
  const EncoderParams imu0 = fresh(cfg.transformer_imu, 1);
  const EncoderParams mocap0 = fresh(cfg.mocap, 3);
  const auto imu_train = prepare_all(imu0, train.imu);
  const auto imu_val = prepare_all(imu0, val.imu);
  const auto imu_test = prepare_all(imu0, test.imu);
  const auto mocap_train = prepare_all(mocap0, train.mocap);
  const auto mocap_val = prepare_all(mocap0, val.mocap);
  const auto mocap_test = prepare_all(mocap0, test.mocap);
  const Tensor text_train = embed_texts(anchor, train.texts);
  const Tensor text_val = embed_texts(anchor, val.texts);
  const Tensor text_test = embed_texts(anchor, test.texts);

  ProgressiveData pd;
  pd.stage1_train = {imu_train, text_train};
  pd.stage1_val = PairedData{imu_val, text_val};
  pd.stage2_train = {mocap_train, imu_train};
  pd.stage2_val = JointData{mocap_val, imu_val};
  const ProgressiveResult prog = train_progressive(imu0, mocap0, pd, cfg.stage1, cfg.stage2);
  out.stage1_transformer = prog.stage1;
  out.stage2 = prog.stage2;
  out.imu_checksum_before_stage2 = prog.imu_checksum_before_stage2;
  out.imu_checksum_after_stage2 = prog.imu_checksum_after_stage2;

  const Tensor imu_emb = embed_all(prog.imu, imu_test, cfg.threads);
  const Tensor mocap_emb = embed_all(prog.mocap, mocap_test, cfg.threads);
  const Tensor mocap_emb0 = embed_all(mocap0, mocap_test, cfg.threads);
  out.imu_to_text = retrieve(imu_emb, text_test, cfg.ks, "imu->text");
  out.text_to_imu = retrieve(text_test, imu_emb, cfg.ks, "text->imu");
  out.mocap_to_imu = retrieve(mocap_emb, imu_emb, cfg.ks, "mocap->imu");
  out.imu_to_mocap = retrieve(imu_emb, mocap_emb, cfg.ks, "imu->mocap");
  out.mocap_to_imu_untrained = retrieve(mocap_emb0, imu_emb, cfg.ks, "mocap->imu (untrained mocap)");
  out.imu_to_mocap_untrained = retrieve(imu_emb, mocap_emb0, cfg.ks, "imu->mocap (untrained mocap)");

  // RNN: stage 1 only; the mocap stage is shared with the transformer run.
  const EncoderParams rnn0 = fresh(cfg.rnn_imu, 2);
  TrainConfig rnn_cfg = cfg.stage1;
  rnn_cfg.seed = mix_seed(seed, 13);
  const TrainResult rnn = train_pair(rnn0, {imu_train, text_train}, PairedData{imu_val, text_val}, rnn_cfg,
                                     "stage1_rnn_imu");
  out.stage1_rnn = rnn.report;

  const HarRun tr = recognize(prog.imu, imu_train, train.labels, imu_test, test.labels, ds, anchors, cfg,
                              mix_seed(seed, 21), true);
  const HarRun rr = recognize(rnn.params, imu_train, train.labels, imu_test, test.labels, ds, anchors, cfg,
                              mix_seed(seed, 22), true);
  out.rows.push_back({"rnn", rr.zeroshot, rr.transfer, rr.finetune});
  out.rows.push_back({"transformer", tr.zeroshot, tr.transfer, tr.finetune});
  if (cfg.random_init_rows) {
    for (const auto& [name, c, stream] :
         {std::tuple{"rnn (random init)", cfg.rnn_imu, 4}, std::tuple{"transformer (random init)", cfg.transformer_imu, 5}}) {
      FinetuneConfig ft = cfg.finetune;
      ft.seed = mix_seed(seed, 30 + stream);
      ft.threads = cfg.threads;
      const auto r = finetune_classify(fresh(c, stream), imu_train, train.labels, imu_test, test.labels, ds.labels, ft);
      out.rows.push_back({name, std::nullopt, std::nullopt, r.report});
    }
  }

  // Reports: exact text, free of timings.
  auto& rep = out.reports;
  rep["stage1_transformer.curve.tsv"] = out.stage1_transformer.loss_curve();
  rep["stage1_rnn.curve.tsv"] = out.stage1_rnn.loss_curve();
  rep["stage2_mocap.curve.tsv"] = out.stage2.loss_curve();
  const std::vector<RetrievalReport> retrievals{out.imu_to_text,  out.text_to_imu,
                                                out.mocap_to_imu, out.imu_to_mocap,
                                                out.mocap_to_imu_untrained, out.imu_to_mocap_untrained};
  std::string retrieval_text;
  for (const auto& r : retrievals) retrieval_text += format_retrieval(r) + "\n";
  rep["retrieval.txt"] = retrieval_text;
  rep["retrieval.tsv"] = retrieval_table(retrievals);
  std::string har_text;
  std::vector<std::pair<std::string, HarReport>> har_rows;
  for (const auto& row : out.rows) {
    for (const auto* r : {row.zeroshot ? &*row.zeroshot : nullptr, row.transfer ? &*row.transfer : nullptr,
                          &row.finetune}) {
      if (!r) continue;
      har_text += format_har(*r, row.name) + "\n";
      har_rows.emplace_back(row.name, *r);
    }
  }
  rep["har.txt"] = har_text;
  rep["har.tsv"] = har_table(har_rows);
  rep["comparison.tsv"] = comparison_table(out.rows);
  std::ostringstream summary;
  summary << "seed=" << seed << '\n'
          << "train_pairs=" << train.size() << '\n'
          << "val_pairs=" << val.size() << '\n'
          << "test_pairs=" << test.size() << '\n'
          << "stage1_transformer_best_epoch=" << out.stage1_transformer.best_epoch << '\n'
          << "stage1_rnn_best_epoch=" << out.stage1_rnn.best_epoch << '\n'
          << "stage2_best_epoch=" << out.stage2.best_epoch << '\n'
          << "imu_to_text_mrr=" << fixed(out.imu_to_text.mrr) << '\n'
          << "zeroshot_transformer_accuracy=" << fixed(tr.zeroshot.accuracy) << '\n'
          << "mocap_to_imu_mrr=" << fixed(out.mocap_to_imu.mrr) << '\n'
          << "mocap_to_imu_untrained_mrr=" << fixed(out.mocap_to_imu_untrained.mrr) << '\n'
          << "imu_checksum_before_stage2=" << checksum_hex(out.imu_checksum_before_stage2) << '\n'
          << "imu_checksum_after_stage2=" << checksum_hex(out.imu_checksum_after_stage2) << '\n'
          << "imu_transformer_checksum=" << checksum_hex(prog.imu.checksum()) << '\n'
          << "imu_rnn_checksum=" << checksum_hex(rnn.params.checksum()) << '\n'
          << "mocap_checksum=" << checksum_hex(prog.mocap.checksum()) << '\n';
  rep["summary.txt"] = summary.str();
  if (!cfg.run_dir.empty()) write_reports(rep, cfg.run_dir);
  return out;
}

void write_reports(const std::map<std::string, std::string>& reports, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [name, text] : reports) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("reports: cannot write " + (dir / name).string());
    f << text;
  }
}

}  // namespace aura
