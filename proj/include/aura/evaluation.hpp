#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aura/encoders.hpp"
#include "aura/tensor.hpp"
#include "aura/training.hpp"

namespace aura {

// ---------------------------------------------------------------------------
// Cross-modal retrieval
// ---------------------------------------------------------------------------

struct RetrievalReport {
  std::string direction;             // e.g. "imu->mocap"
  std::map<std::size_t, double> r_at;  // k -> recall@k
  double mrr = 0.0;
  std::size_t n_queries = 0;
  std::vector<std::size_t> ranks;  // 1-based rank of each query's true key
};

/// 1 + #{keys scoring higher} + #{lower-indexed keys scoring equal}: the
/// position of key i for query i in a descending sort with index tie-break.
std::vector<std::size_t> true_key_ranks(const Tensor& queries, const Tensor& keys);

/// Row i of `queries` is paired with row i of `keys`. A k larger than N is
/// evaluated as N (with a warning) but reported under the requested k.
RetrievalReport retrieve(const Tensor& queries, const Tensor& keys, std::vector<std::size_t> ks = {1, 10, 50},
                         std::string direction = {});

/// The k best key indices per query, best first, ties to the lower index.
std::vector<std::vector<std::size_t>> top_k(const Tensor& queries, const Tensor& keys, std::size_t k);

// ---------------------------------------------------------------------------
// Activity recognition
// ---------------------------------------------------------------------------

enum class Regime { zeroshot, transfer, finetune };
std::string to_string(Regime r);

struct HarReport {
  Regime regime = Regime::zeroshot;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::map<std::string, double> per_class_f1;
  std::vector<std::size_t> predictions;
  std::size_t n = 0;
};

/// Per-class F1 over classes 0..n_classes−1; a class with no true and no
/// predicted instance scores 0. Throws DimensionError on length mismatch.
std::vector<double> per_class_f1(std::span<const std::size_t> preds, std::span<const std::size_t> truths,
                                 std::size_t n_classes);
double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> truths, std::size_t n_classes);
double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truths);

HarReport make_har_report(Regime regime, std::vector<std::size_t> preds, std::span<const std::size_t> truths,
                          const std::vector<std::string>& class_names);

/// Label whose embedding has the largest inner product with `embedding`;
/// ties go to the lexicographically smallest label.
std::string zero_shot_classify(const Tensor& embedding, const std::map<std::string, Tensor>& label_embeddings);

/// Zero-shot over rows of `embeddings`; labels are indexed by `class_names`.
HarReport zero_shot_report(const Tensor& embeddings, std::span<const std::size_t> truths,
                           const std::vector<std::string>& class_names,
                           const std::map<std::string, Tensor>& label_embeddings);

struct ProbeConfig {
  std::size_t epochs = 300;  // full-batch steps
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

/// Linear head [D × C] + bias, N(0, 0.02²) weights, zero bias.
struct LinearHead {
  Tensor w;
  Tensor b;
  static LinearHead init(std::size_t dim, std::size_t classes, std::uint64_t seed);
  std::size_t predict(std::span<const double> embedding) const;
};

/// Softmax cross-entropy on frozen embeddings with full-batch Adam. Warns
/// when a class is absent from the training labels.
LinearHead train_linear_head(const Tensor& embeddings, std::span<const std::size_t> labels, std::size_t classes,
                             const ProbeConfig& config);

HarReport linear_probe(const Tensor& train_embeddings, std::span<const std::size_t> train_labels,
                       const Tensor& test_embeddings, std::span<const std::size_t> test_labels,
                       const std::vector<std::string>& class_names, const ProbeConfig& config = {});

struct FinetuneConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct FinetuneResult {
  EncoderParams encoder;
  LinearHead head;
  HarReport report;
};

/// Encoder and head trained end-to-end with cross-entropy and Adam over
/// every batch (the last one may be partial), dropout on; evaluated like
/// linear_probe. The head starts from `head` when given (e.g. a trained
/// probe), else from LinearHead::init with the config seed.
FinetuneResult finetune_classify(EncoderParams encoder, std::span<const Tensor> train_windows,
                                 std::span<const std::size_t> train_labels, std::span<const Tensor> test_windows,
                                 std::span<const std::size_t> test_labels, const std::vector<std::string>& class_names,
                                 const FinetuneConfig& config, std::optional<LinearHead> head = std::nullopt);

// ---------------------------------------------------------------------------
// Report text
// ---------------------------------------------------------------------------

/// key=value lines.
std::string format_retrieval(const RetrievalReport& r);
std::string format_har(const HarReport& r, const std::string& encoder_name = {});
/// Tab-separated table with a header row.
std::string retrieval_table(const std::vector<RetrievalReport>& reports);
std::string har_table(const std::vector<std::pair<std::string, HarReport>>& reports);
/// Top-k listing per query for qualitative inspection.
std::string format_top_k(const Tensor& queries, const Tensor& keys, std::size_t k,
                         const std::vector<std::string>& query_names, const std::vector<std::string>& key_names);

}  // namespace aura
