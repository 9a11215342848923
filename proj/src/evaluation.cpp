#include "aura/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include "aura/error.hpp"
#include "aura/log.hpp"
#include "aura/rng.hpp"

namespace aura {

namespace {

void check_pairing(const Tensor& q, const Tensor& k, const char* what) {
  if (q.empty() || k.empty()) throw InsufficientDataError(std::string(what) + ": no queries");
  require_rank(q, 2, what);
  require_rank(k, 2, what);
  if (q.shape() != k.shape()) {
    throw DimensionError(std::string(what) + ": queries " + shape_string(q.shape()) + " and keys " +
                         shape_string(k.shape()) + " do not pair up");
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::vector<std::size_t> true_key_ranks(const Tensor& queries, const Tensor& keys) {
  check_pairing(queries, keys, "retrieve");
  const Tensor S = matmul_nt(queries, keys);
  const std::size_t N = S.dim(0);
  std::vector<std::size_t> ranks(N);
  for (std::size_t q = 0; q < N; ++q) {
    const double s = S(q, q);
    std::size_t better = 0;
    for (std::size_t k = 0; k < N; ++k) {
      const double v = S(q, k);
      if (v > s || (v == s && k < q)) ++better;
    }
    ranks[q] = better + 1;
  }
  return ranks;
}

RetrievalReport retrieve(const Tensor& queries, const Tensor& keys, std::vector<std::size_t> ks,
                         std::string direction) {
  RetrievalReport r;
  r.direction = std::move(direction);
  r.ranks = true_key_ranks(queries, keys);
  const std::size_t N = r.ranks.size();
  r.n_queries = N;
  for (std::size_t k : ks) {
    if (k == 0) throw ConfigError("retrieve: k must be positive");
    std::size_t eff = k;
    if (k > N) {
      log::warn("retrieve: k=" + std::to_string(k) + " exceeds " + std::to_string(N) + " keys; using k=" +
                std::to_string(N));
      eff = N;
    }
    std::size_t hits = 0;
    for (auto rank : r.ranks) hits += rank <= eff;
    r.r_at[k] = static_cast<double>(hits) / static_cast<double>(N);
  }
  double inv = 0.0;
  for (auto rank : r.ranks) inv += 1.0 / static_cast<double>(rank);
  r.mrr = inv / static_cast<double>(N);
  return r;
}

std::vector<std::vector<std::size_t>> top_k(const Tensor& queries, const Tensor& keys, std::size_t k) {
  require_rank(queries, 2, "top_k");
  require_rank(keys, 2, "top_k");
  const Tensor S = matmul_nt(queries, keys);
  const std::size_t n = std::min(k, S.dim(1));
  std::vector<std::vector<std::size_t>> out(S.dim(0));
  for (std::size_t q = 0; q < S.dim(0); ++q) {
    std::vector<std::size_t> idx(S.dim(1));
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (S(q, a) != S(q, b)) return S(q, a) > S(q, b);
                        return a < b;
                      });
    out[q].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::zeroshot: return "zeroshot";
    case Regime::transfer: return "transfer";
    case Regime::finetune: return "finetune";
  }
  return "zeroshot";
}

std::vector<double> per_class_f1(std::span<const std::size_t> preds, std::span<const std::size_t> truths,
                                 std::size_t n_classes) {
  if (preds.size() != truths.size()) {
    throw DimensionError("f1: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(truths.size()) + " labels");
  }
  std::vector<double> tp(n_classes), fp(n_classes), fn(n_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= n_classes || truths[i] >= n_classes) throw ContractError("f1: class index out of range");
    if (preds[i] == truths[i]) {
      tp[preds[i]] += 1;
    } else {
      fp[preds[i]] += 1;
      fn[truths[i]] += 1;
    }
  }
  std::vector<double> f1(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    f1[c] = denom == 0.0 ? 0.0 : 2 * tp[c] / denom;
  }
  return f1;
}

double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> truths, std::size_t n_classes) {
  if (n_classes == 0) throw ConfigError("f1: no classes");
  const auto f1 = per_class_f1(preds, truths, n_classes);
  return std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(n_classes);
}

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truths) {
  if (preds.size() != truths.size()) throw DimensionError("accuracy: length mismatch");
  if (preds.empty()) throw InsufficientDataError("accuracy: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

HarReport make_har_report(Regime regime, std::vector<std::size_t> preds, std::span<const std::size_t> truths,
                          const std::vector<std::string>& class_names) {
  HarReport r;
  r.regime = regime;
  const auto f1 = per_class_f1(preds, truths, class_names.size());
  for (std::size_t c = 0; c < class_names.size(); ++c) r.per_class_f1[class_names[c]] = f1[c];
  r.macro_f1 = macro_f1(preds, truths, class_names.size());
  r.accuracy = accuracy(preds, truths);
  r.n = preds.size();
  r.predictions = std::move(preds);
  return r;
}

std::string zero_shot_classify(const Tensor& embedding, const std::map<std::string, Tensor>& label_embeddings) {
  if (label_embeddings.empty()) throw InsufficientDataError("zero_shot_classify: empty label set");
  const std::string* best = nullptr;
  double best_score = 0.0;
  for (const auto& [label, e] : label_embeddings) {
    if (e.size() != embedding.size()) throw DimensionError("zero_shot_classify: label '" + label + "' width differs");
    const double s = dot(embedding.data(), e.data());
    if (!best || s > best_score) {
      best = &label;
      best_score = s;
    }
  }
  return *best;
}

HarReport zero_shot_report(const Tensor& embeddings, std::span<const std::size_t> truths,
                           const std::vector<std::string>& class_names,
                           const std::map<std::string, Tensor>& label_embeddings) {
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < class_names.size(); ++c) index[class_names[c]] = c;
  std::vector<std::size_t> preds;
  for (std::size_t i = 0; i < embeddings.dim(0); ++i) {
    Tensor row({embeddings.dim(1)});
    std::copy(embeddings.row(i).begin(), embeddings.row(i).end(), row.data().begin());
    const std::string label = zero_shot_classify(row, label_embeddings);
    const auto it = index.find(label);
    if (it == index.end()) throw LookupError("zero-shot: label '" + label + "' is not a class");
    preds.push_back(it->second);
  }
  return make_har_report(Regime::zeroshot, std::move(preds), truths, class_names);
}

LinearHead LinearHead::init(std::size_t dim, std::size_t classes, std::uint64_t seed) {
  LinearHead h{Tensor({dim, classes}), Tensor({classes})};
  Rng rng(mix_seed(seed, 0x4ead));
  for (auto& v : h.w.data()) v = 0.02 * rng.normal();
  return h;
}

std::size_t LinearHead::predict(std::span<const double> e) const {
  const std::size_t C = b.size();
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    double s = b[c];
    for (std::size_t d = 0; d < e.size(); ++d) s += e[d] * w(d, c);
    if (c == 0 || s > best_score) {
      best = c;
      best_score = s;
    }
  }
  return best;
}

namespace {

void warn_absent(std::span<const std::size_t> labels, std::size_t classes, const char* what) {
  std::set<std::size_t> present(labels.begin(), labels.end());
  for (std::size_t c = 0; c < classes; ++c) {
    if (!present.count(c)) {
      log::warn(std::string(what) + ": class " + std::to_string(c) + " is absent from the training labels");
    }
  }
}

std::vector<std::size_t> predict_rows(const LinearHead& head, const Tensor& embeddings) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < embeddings.dim(0); ++i) out.push_back(head.predict(embeddings.row(i)));
  return out;
}

}  // namespace

LinearHead train_linear_head(const Tensor& embeddings, std::span<const std::size_t> labels, std::size_t classes,
                             const ProbeConfig& config) {
  require_rank(embeddings, 2, "linear_probe");
  if (embeddings.dim(0) != labels.size()) throw DimensionError("linear_probe: one label per embedding required");
  for (auto l : labels)
    if (l >= classes) throw ContractError("linear_probe: label out of range");
  warn_absent(labels, classes, "linear_probe");
  LinearHead head = LinearHead::init(embeddings.dim(1), classes, config.seed);
  ParamMap params{{"w", head.w}, {"b", head.b}};
  TrainConfig opt;
  opt.lr = config.lr;
  OptimizerState state;
  const std::vector<std::size_t> cols(labels.begin(), labels.end());
  for (std::size_t step = 0; step < config.epochs; ++step) {
    Tape tape;
    Var W = tape.parameter(params.at("w"));
    Var B = tape.parameter(params.at("b"));
    Var logits = ad::add_row(ad::matmul(tape.view(embeddings), W), B);
    Var loss = ad::affine(ad::pick_mean(ad::log_softmax_rows(logits), cols), -1.0);
    tape.backward(loss);
    const ParamMap grads{{"w", tape.grad(W)}, {"b", tape.grad(B)}};
    update_step(params, grads, state, opt);
  }
  head.w = params.at("w");
  head.b = params.at("b");
  return head;
}

HarReport linear_probe(const Tensor& train_embeddings, std::span<const std::size_t> train_labels,
                       const Tensor& test_embeddings, std::span<const std::size_t> test_labels,
                       const std::vector<std::string>& class_names, const ProbeConfig& config) {
  const LinearHead head = train_linear_head(train_embeddings, train_labels, class_names.size(), config);
  return make_har_report(Regime::transfer, predict_rows(head, test_embeddings), test_labels, class_names);
}

FinetuneResult finetune_classify(EncoderParams encoder, std::span<const Tensor> train_windows,
                                 std::span<const std::size_t> train_labels, std::span<const Tensor> test_windows,
                                 std::span<const std::size_t> test_labels, const std::vector<std::string>& class_names,
                                 const FinetuneConfig& config, std::optional<LinearHead> initial_head) {
  const std::size_t C = class_names.size();
  if (train_windows.size() != train_labels.size()) throw DimensionError("finetune: one label per window required");
  if (train_windows.empty()) throw InsufficientDataError("finetune: no training windows");
  if (config.batch_size == 0) throw ConfigError("finetune: batch_size must be positive");
  for (auto l : train_labels)
    if (l >= C) throw ContractError("finetune: label out of range");
  warn_absent(train_labels, C, "finetune");
  encoder.validate();
  LinearHead head = initial_head ? std::move(*initial_head) : LinearHead::init(encoder.config.out_dim, C, config.seed);
  if (head.w.shape() != Shape{encoder.config.out_dim, C} || head.b.shape() != Shape{C}) {
    throw DimensionError("finetune: head does not map " + std::to_string(encoder.config.out_dim) + " to " +
                         std::to_string(C) + " classes");
  }
  ParamMap head_params{{"w", head.w}, {"b", head.b}};
  TrainConfig opt;
  opt.lr = config.lr;
  OptimizerState enc_state, head_state;
  const std::size_t n = train_windows.size();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed(config.seed, 7000 + epoch));
    rng.shuffle(perm);
    for (std::size_t start = 0, batch = 0; start < n; start += config.batch_size, ++batch) {
      const std::size_t count = std::min(config.batch_size, n - start);
      const double scale = -1.0 / static_cast<double>(count);
      ParamMap enc_grads, head_grads;
      for (const auto& [name, t] : encoder.tensors) enc_grads.emplace(name, Tensor(t.shape()));
      for (const auto& [name, t] : head_params) head_grads.emplace(name, Tensor(t.shape()));
      const std::uint64_t batch_seed = mix_seed(mix_seed(config.seed, 9000 + epoch), batch);
      // Per-sample tapes in chunks of `threads`, summed in sample order.
      const std::size_t chunk = std::max<std::size_t>(1, config.threads);
      std::vector<ParamMap> part_enc(chunk), part_head(chunk);
      for (std::size_t c0 = 0; c0 < count; c0 += chunk) {
        const std::size_t m = std::min(chunk, count - c0);
        parallel_for(m, config.threads, [&](std::size_t k) {
          const std::size_t i = perm[start + c0 + k];
          Tape tape;
          const BoundParams bp = bind(tape, encoder, true);
          Var W = tape.parameter(head_params.at("w"));
          Var B = tape.parameter(head_params.at("b"));
          EncodeOptions eo{true, mix_seed(batch_seed, c0 + k)};
          Var e;
          try {
            e = encode(tape, bp, encoder.config, train_windows[i], eo);
          } catch (const NumericError& err) {
            throw TrainingError(std::string("finetune: ") + err.what(), epoch, batch);
          }
          Var logits = ad::add_row(ad::matmul(ad::reshape(e, {1, e.shape()[0]}), W), B);
          const std::size_t label = train_labels[i];
          Var loss = ad::affine(ad::pick_mean(ad::log_softmax_rows(logits), std::span(&label, 1)), scale);
          if (!std::isfinite(loss.value()[0])) throw TrainingError("finetune: non-finite loss", epoch, batch);
          tape.backward(loss);
          part_enc[k].clear();
          part_head[k].clear();
          for (const auto& [name, v] : bp.vars) part_enc[k].emplace(name, tape.grad(v));
          part_head[k].emplace("w", tape.grad(W));
          part_head[k].emplace("b", tape.grad(B));
        });
        for (std::size_t k = 0; k < m; ++k) {
          for (auto& [name, g] : enc_grads) axpy(g, part_enc[k].at(name));
          for (auto& [name, g] : head_grads) axpy(g, part_head[k].at(name));
        }
      }
      update_step(encoder.tensors, enc_grads, enc_state, opt);
      update_step(head_params, head_grads, head_state, opt);
    }
  }
  head.w = head_params.at("w");
  head.b = head_params.at("b");
  const Tensor test_emb = embed_all(encoder, test_windows, config.threads);
  HarReport report = make_har_report(Regime::finetune, predict_rows(head, test_emb), test_labels, class_names);
  return FinetuneResult{std::move(encoder), std::move(head), std::move(report)};
}

std::string format_retrieval(const RetrievalReport& r) {
  std::ostringstream s;
  s << "direction=" << r.direction << '\n' << "n_queries=" << r.n_queries << '\n';
  for (const auto& [k, v] : r.r_at) s << "r@" << k << '=' << fmt(v) << '\n';
  s << "mrr=" << fmt(r.mrr) << '\n';
  return s.str();
}

std::string format_har(const HarReport& r, const std::string& encoder_name) {
  std::ostringstream s;
  if (!encoder_name.empty()) s << "encoder=" << encoder_name << '\n';
  s << "regime=" << to_string(r.regime) << '\n'
    << "n=" << r.n << '\n'
    << "macro_f1=" << fmt(r.macro_f1) << '\n'
    << "accuracy=" << fmt(r.accuracy) << '\n';
  for (const auto& [label, f1] : r.per_class_f1) s << "f1[" << label << "]=" << fmt(f1) << '\n';
  return s.str();
}

std::string retrieval_table(const std::vector<RetrievalReport>& reports) {
  std::set<std::size_t> ks;
  for (const auto& r : reports)
    for (const auto& [k, v] : r.r_at) ks.insert(k);
  std::ostringstream s;
  s << "direction\tn_queries";
  for (auto k : ks) s << "\tr@" << k;
  s << "\tmrr\n";
  for (const auto& r : reports) {
    s << r.direction << '\t' << r.n_queries;
    for (auto k : ks) {
      const auto it = r.r_at.find(k);
      s << '\t' << (it == r.r_at.end() ? std::string("-") : fmt(it->second));
    }
    s << '\t' << fmt(r.mrr) << '\n';
  }
  return s.str();
}

std::string har_table(const std::vector<std::pair<std::string, HarReport>>& reports) {
  std::ostringstream s;
  s << "encoder\tregime\tn\tmacro_f1\taccuracy\n";
  for (const auto& [name, r] : reports) {
    s << name << '\t' << to_string(r.regime) << '\t' << r.n << '\t' << fmt(r.macro_f1) << '\t' << fmt(r.accuracy)
      << '\n';
  }
  return s.str();
}

std::string format_top_k(const Tensor& queries, const Tensor& keys, std::size_t k,
                         const std::vector<std::string>& query_names, const std::vector<std::string>& key_names) {
  const auto top = top_k(queries, keys, k);
  std::ostringstream s;
  for (std::size_t q = 0; q < top.size(); ++q) {
    s << (q < query_names.size() ? query_names[q] : std::to_string(q)) << ':';
    for (auto i : top[q]) {
      s << ' ' << (i < key_names.size() ? key_names[i] : std::to_string(i)) << '('
        << fmt(dot(queries.row(q), keys.row(i))) << ')';
    }
    s << '\n';
  }
  return s.str();
}

}  // namespace aura
