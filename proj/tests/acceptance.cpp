// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance <path-to-aura-binary> <scratch-dir>
//
// Criteria 5-8 run the seeded synthetic benchmark twice: once in-process and
// once through `aura compare`, whose report files must match byte for byte.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "aura/contrastive.hpp"
#include "aura/error.hpp"
#include "aura/evaluation.hpp"
#include "aura/experiment.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/tiny.hpp"

using namespace aura;
using namespace aura::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "failed: " + what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  if (!o.pass) ++failures;
  std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, const char* f = "%.3g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor unit_rows(std::size_t n, std::size_t d, Rng& rng) { return l2_normalize_rows(random_tensor({n, d}, rng)); }

/// Runs a criterion body, turning an unexpected exception into a failure.
Outcome guarded(const std::function<void(Outcome&)>& body) {
  Outcome o;
  try {
    body(o);
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  return o;
}

// ---------------------------------------------------------------------------

void criterion_infonce(Outcome& o) {
  const auto t0 = Clock::now();
  const Tensor one = Tensor::matrix({{0.6, 0.8}});
  o.require(loss_symmetric(one, one, 1.0) == 0.0, "B=1 loss is exactly 0");
  const Tensor eye = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}});
  const double expected = std::log1p(std::exp(-1.0));
  const double b2 = loss_symmetric(eye, eye, 1.0);
  o.require(std::abs(b2 - expected) < 1e-9, "B=2 orthonormal loss = log(1+e^-1), got " + num(b2, "%.17g"));
  Rng rng(2024);
  double worst = 0.0;
  bool symmetric = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = 1 + rng.below(32), D = 1 + rng.below(24);
    const double tau = trial % 2 ? 1.0 : 0.05 + rng.uniform();
    const Tensor I = unit_rows(B, D, rng);
    const Tensor M = unit_rows(B, D, rng);
    const double ours = loss_symmetric(I, M, tau);
    const auto ref = static_cast<double>(oracle::info_nce_symmetric(I, M, tau));
    worst = std::max(worst, std::abs(ours - ref));
    symmetric = symmetric && ours == loss_symmetric(M, I, tau);
  }
  o.require(worst < 1e-10, "random batches within 1e-10 of the extended-precision oracle");
  o.require(symmetric, "loss_symmetric(I,M) == loss_symmetric(M,I) bitwise");
  const double t = seconds_since(t0);
  o.require(t < 1.0, "runtime under 1 s");
  o.note("B=2 error " + num(std::abs(b2 - expected)) + ", max oracle error " + num(worst) + ", " + num(t) + " s");
}

void criterion_gradients(Outcome& o) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0, runs = 0;
  for (auto kind : {EncoderKind::transformer, EncoderKind::rnn}) {
    for (auto m : {Modality::imu, Modality::mocap}) {
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto cfg = kind == EncoderKind::transformer ? tiny_transformer(m) : tiny_rnn(m);
        const EncoderParams p = randomized(cfg, seed, 0.3);
        Rng rng(seed * 7919);
        std::vector<Tensor> windows;
        for (int i = 0; i < 3; ++i) windows.push_back(random_window(m, rng));
        const Tensor anchors = unit_rows(3, cfg.out_dim, rng);
        const double tau = seed % 2 ? 1.0 : 0.1;
        const auto r = check_gradients(encoder_objective(cfg, names_of(p), windows, anchors, tau), tensors_of(p),
                                       1e-5, 8, seed);
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
        ++runs;
        if (r.max_rel_error >= 1e-4) {
          o.require(false, to_string(kind) + "/" + to_string(m) + " seed " + std::to_string(seed) + " parameter " +
                               names_of(p)[r.worst_param] + " rel error " + num(r.max_rel_error));
        }
      }
    }
  }
  // Full-size encoders with their initialization, sampled coordinates.
  for (auto kind : {EncoderKind::transformer, EncoderKind::rnn}) {
    const auto cfg = EncoderConfig::make(kind, Modality::imu);
    const EncoderParams p = init_params(cfg, 42);
    Rng rng(43);
    std::vector<Tensor> windows;
    for (int i = 0; i < 2; ++i) windows.push_back(random_window(Modality::imu, rng));
    const Tensor anchors = unit_rows(2, cfg.out_dim, rng);
    const auto r = check_gradients(encoder_objective(cfg, names_of(p), windows, anchors, 0.1), tensors_of(p), 1e-5,
                                   2, 44);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    ++runs;
    if (r.max_rel_error >= 1e-4) {
      o.require(false, "full-size " + to_string(kind) + " parameter " + names_of(p)[r.worst_param] + " rel error " +
                           num(r.max_rel_error));
    }
  }
  const double t = seconds_since(t0);
  o.require(t < 120.0, "runtime under 2 min");
  o.note(std::to_string(runs) + " runs, " + std::to_string(checked) + " coordinates, max rel error " + num(worst) +
         ", " + num(t) + " s");
}

void criterion_unit_norm(Outcome& o) {
  std::size_t n = 0;
  double worst = 0.0;
  Rng rng(77);
  auto check = [&](const EncoderParams& p, Modality m) {
    Tensor w = random_window(m, rng);
    const double scale = std::pow(10.0, -3.0 + 6.0 * rng.uniform());
    for (auto& v : w.data()) v *= scale;
    const Tensor e = encode(p, w);
    worst = std::max(worst, std::abs(l2_norm(e.data()) - 1.0));
    ++n;
  };
  for (auto kind : {EncoderKind::transformer, EncoderKind::rnn}) {
    for (auto m : {Modality::imu, Modality::mocap}) {
      const EncoderParams full = init_params(EncoderConfig::make(kind, m), 5);
      for (int i = 0; i < 25; ++i) check(full, m);
      const auto cfg = kind == EncoderKind::transformer ? tiny_transformer(m) : tiny_rnn(m);
      for (std::uint64_t s = 0; s < 99; ++s) {
        const EncoderParams p = randomized(cfg, 1000 + s, 0.5);
        for (int i = 0; i < 25; ++i) check(p, m);
      }
    }
  }
  o.require(n == 10000, "10,000 outputs checked");
  o.require(worst <= 1e-6, "every norm within 1 +/- 1e-6");
  o.note(std::to_string(n) + " outputs, max |norm-1| " + num(worst));
}

void criterion_retrieval(Outcome& o) {
  Rng rng(99);
  std::size_t agree = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t N = inst == 0 ? 1000 : inst == 1 ? 1 : 1 + rng.below(1000);
    const std::size_t D = 1 + rng.below(16);
    Tensor q = random_tensor({N, D}, rng), k = random_tensor({N, D}, rng);
    if (inst % 4 == 0) {
      // Coarse values force many exact score ties.
      for (auto& v : q.data()) v = std::round(v);
      for (auto& v : k.data()) v = std::round(v);
    }
    agree += true_key_ranks(q, k) == oracle::brute_force_ranks(q, k).ranks;
  }
  o.require(agree == 100, "ranks equal the brute-force sort on all 100 instances");
  bool monotone = true, invariant = true;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t N = 10 + rng.below(300), D = 2 + rng.below(12);
    const Tensor q = unit_rows(N, D, rng);
    Tensor k = unit_rows(N, D, rng);
    axpy(k, q, rng.uniform() * 3);
    k = l2_normalize_rows(k);
    const auto base = retrieve(q, k, {1, 2, 5, 10, 50, N});
    double prev = 0.0;
    for (const auto& [kk, v] : base.r_at) {
      monotone = monotone && v >= prev;
      prev = v;
    }
    monotone = monotone && base.r_at.at(N) == 1.0;
    // Joint random rotation via Householder reflections.
    Tensor q2 = q, k2 = k;
    for (int h = 0; h < 3; ++h) {
      const Tensor u = l2_normalize(random_tensor({D}, rng));
      for (Tensor* t : {&q2, &k2}) {
        for (std::size_t r = 0; r < N; ++r) {
          const double proj = dot(t->row(r), u.data());
          for (std::size_t d = 0; d < D; ++d) (*t)(r, d) -= 2.0 * proj * u[d];
        }
      }
    }
    const auto turned = retrieve(q2, k2, {1, 2, 5, 10, 50, N});
    invariant = invariant && std::abs(turned.mrr - base.mrr) < 1e-9;
    for (const auto& [kk, v] : base.r_at) invariant = invariant && std::abs(turned.r_at.at(kk) - v) < 1e-9;
  }
  o.require(monotone, "R@k nondecreasing in k with R@N = 1");
  o.require(invariant, "metrics unchanged under a joint rotation");
  o.note(std::to_string(agree) + "/100 instances agree; 20 monotonicity and rotation cases");
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Parses the comparison table into rows of named cells.
std::map<std::string, std::map<std::string, std::string>> parse_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::map<std::string, std::map<std::string, std::string>> rows;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream s(l);
    std::string c;
    while (std::getline(s, c, '\t')) cells.push_back(c);
    return cells;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (header.empty()) {
      header = cells;
      continue;
    }
    for (std::size_t i = 1; i < cells.size() && i < header.size(); ++i) rows[cells[0]][header[i]] = cells[i];
  }
  return rows;
}

void criterion_roundtrips(Outcome& o) {
  TempDir tmp("acceptance_rt");
  Rng rng(31337);
  std::size_t datasets = 0, checkpoints = 0;
  bool ok = true;
  while (datasets < 1000) {
    const Dataset ds = random_dataset(rng);
    try {
      ds.validate();
    } catch (const FormatError&) {
      continue;  // colliding random keys; draw again
    }
    const fs::path dir = tmp.path / "ds";
    fs::remove_all(dir);
    write_dataset(ds, dir);
    const Dataset back = read_dataset(dir);
    ok = ok && back.records == ds.records && back.labels == ds.labels && back.name == ds.name &&
         back.embedding_dim == ds.embedding_dim && back.vocabulary.words() == ds.vocabulary.words();
    ++datasets;
  }
  o.require(ok, "dataset read(write(x)) == x");
  bool ck = true;
  for (; checkpoints < 1000; ++checkpoints) {
    Checkpoint c;
    c.metadata = "{\"trial\":" + std::to_string(checkpoints) + "}";
    const std::size_t n = rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
      Shape s;
      for (std::size_t r = 0, rank = 1 + rng.below(3); r < rank; ++r) s.push_back(1 + rng.below(5));
      c.tensors["t" + std::to_string(rng.below(1000))] = random_tensor(s, rng, std::pow(10.0, rng.uniform() * 20 - 10));
    }
    if (checkpoints % 4 == 0) {
      const EncoderParams p = randomized(rng.below(2) ? tiny_rnn(Modality::imu) : tiny_transformer(Modality::mocap),
                                         checkpoints, 0.5);
      c = p.to_checkpoint();
      ck = ck && EncoderParams::from_checkpoint(c).checksum() == p.checksum();
    }
    const fs::path f = tmp.path / "c.ckpt";
    write_checkpoint(c, f);
    ck = ck && read_checkpoint(f) == c;
  }
  o.require(ck, "checkpoint read(write(x)) == x");
  o.note(std::to_string(datasets) + " dataset and " + std::to_string(checkpoints) + " checkpoint trials");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path aura_bin = argc > 1 ? fs::path(argv[1]) : fs::path();
  const fs::path scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "aura_acceptance";

  report(1, "InfoNCE correctness", guarded(criterion_infonce));
  report(2, "gradient fidelity against central differences", guarded(criterion_gradients));
  report(3, "unit-hypersphere contract", guarded(criterion_unit_norm));
  report(4, "retrieval metrics match a brute-force oracle", guarded(criterion_retrieval));

  // Benchmark run 1: in-process.
  std::optional<BenchmarkResult> bench;
  double bench_seconds = 0.0;
  std::string bench_error;
  const BenchmarkConfig cfg = BenchmarkConfig::standard();
  try {
    const auto t0 = Clock::now();
    bench = run_benchmark(cfg);
    bench_seconds = seconds_since(t0);
  } catch (const std::exception& e) {
    bench_error = e.what();
  }

  report(5, "synthetic end-to-end alignment", guarded([&](Outcome& o) {
           o.require(bench.has_value(), "benchmark ran: " + bench_error);
           if (!bench) return;
           const std::size_t N = bench->imu_to_text.n_queries;
           double harmonic = 0.0;
           for (std::size_t i = 1; i <= N; ++i) harmonic += 1.0 / static_cast<double>(i);
           double mrr = 0.0;  // recomputed from the ranks
           for (auto r : bench->imu_to_text.ranks) mrr += 1.0 / static_cast<double>(r);
           mrr /= static_cast<double>(N);
           const auto row = std::find_if(bench->rows.begin(), bench->rows.end(),
                                         [](const EncoderRow& r) { return r.name == "transformer"; });
           o.require(row != bench->rows.end() && row->zeroshot, "transformer zero-shot row present");
           if (row == bench->rows.end() || !row->zeroshot) return;
           const HarReport& zs = *row->zeroshot;
           o.require(cfg.stage1.epochs <= 30, "at most 30 epochs");
           o.require(N == 52, "test split of 52 pairs");
           o.require(mrr >= 0.30, "IMU->anchor MRR >= 0.30");
           o.require(zs.accuracy >= 0.25, "zero-shot accuracy >= 0.25");
           o.require(bench_seconds < 600.0, "runtime under 10 min");
           o.note("MRR " + num(mrr, "%.4f") + " (chance " + num(harmonic / N, "%.4f") + "), zero-shot accuracy " +
                  num(zs.accuracy, "%.4f") + ", " + std::to_string(cfg.stage1.epochs) + " epochs; whole benchmark " +
                  num(bench_seconds, "%.0f") + " s");
         }));

  report(6, "progressive stage 2", guarded([&](Outcome& o) {
           o.require(bench.has_value(), "benchmark ran");
           if (!bench) return;
           o.require(bench->mocap_to_imu.mrr > bench->mocap_to_imu_untrained.mrr,
                     "trained mocap->IMU MRR exceeds the untrained baseline");
           o.require(bench->imu_checksum_before_stage2 == bench->imu_checksum_after_stage2,
                     "frozen IMU checksum unchanged");
           o.note("mocap->IMU MRR " + num(bench->mocap_to_imu.mrr, "%.4f") + " vs untrained " +
                  num(bench->mocap_to_imu_untrained.mrr, "%.4f") + "; IMU checksum " +
                  std::to_string(bench->imu_checksum_after_stage2));
         }));

  // Benchmark run 2: through the command-line tool.
  const fs::path cli_dir = scratch / "cli-compare";
  int cli_status = -1;
  if (!aura_bin.empty()) {
    fs::remove_all(cli_dir);
    fs::create_directories(scratch);
    const std::string cmd = "\"" + aura_bin.string() + "\" compare --seed " + std::to_string(cfg.seed) +
                            " --run-dir \"" + scratch.string() + "\" --name cli-compare > \"" +
                            (scratch / "cli-compare.out").string() + "\" 2>&1";
    cli_status = std::system(cmd.c_str());
  }

  report(7, "encoder comparability harness", guarded([&](Outcome& o) {
           o.require(!aura_bin.empty(), "path to the aura binary given");
           o.require(cli_status == 0, "`aura compare` exits 0");
           if (cli_status != 0) return;
           const auto rows = parse_tsv(read_file(cli_dir / "comparison.tsv"));
           std::string summary;
           for (const std::string name : {"rnn", "transformer"}) {
             const auto it = rows.find(name);
             o.require(it != rows.end(), name + " row present");
             if (it == rows.end()) continue;
             bool populated = true;
             for (const char* col : {"zeroshot_f1", "zeroshot_acc", "transfer_f1", "transfer_acc", "finetune_f1",
                                     "finetune_acc"}) {
               populated = populated && it->second.count(col) && it->second.at(col) != "-";
             }
             o.require(populated, name + " row populated in all regimes");
             if (!populated) continue;
             const double ft = std::stod(it->second.at("finetune_acc"));
             const double lp = std::stod(it->second.at("transfer_acc"));
             o.require(ft >= lp, name + " fine-tune accuracy >= linear-probe accuracy");
             summary += name + " zeroshot/transfer/finetune acc " + it->second.at("zeroshot_acc") + "/" +
                        it->second.at("transfer_acc") + "/" + it->second.at("finetune_acc") + " ";
           }
           o.note(summary + "from " + (cli_dir / "comparison.tsv").string());
         }));

  report(8, "determinism of the benchmark reports", guarded([&](Outcome& o) {
           o.require(bench.has_value() && cli_status == 0, "both benchmark runs completed");
           if (!bench || cli_status != 0) return;
           std::size_t same = 0;
           for (const auto& [name, text] : bench->reports) {
             const fs::path f = cli_dir / name;
             const bool equal = fs::exists(f) && read_file(f) == text;
             o.require(equal, name + " identical across runs");
             same += equal;
           }
           o.note(std::to_string(same) + "/" + std::to_string(bench->reports.size()) +
                  " report files byte-identical (in-process run vs `aura compare`)");
         }));

  report(9, "format round-trips", guarded(criterion_roundtrips));

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
