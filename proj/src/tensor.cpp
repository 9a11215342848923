#include "aura/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "aura/error.hpp"

namespace aura {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw DimensionError("ragged rows in Tensor::matrix");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({m, n}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t n = shape_.back();
  return std::span<const double>(data_).subspan(r * n, n);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t n = shape_.back();
  return std::span<double>(data_).subspan(r * n, n);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(t.shape()));
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* pc = c.raw();
  // i-k-j order: every c[i][j] still receives its k terms in increasing k.
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt lhs");
  require_rank(b, 2, "matmul_nt rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()) + "^T");
  }
  Tensor c({m, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* pc = c.raw();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = pb + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      pc[i * n + j] = s;
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_tn lhs");
  require_rank(b, 2, "matmul_tn rhs");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul_tn: inner dimensions differ, " + shape_string(a.shape()) +
                         "^T x " + shape_string(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* pc = c.raw();
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = pa + p * m;
    const double* bp = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
  return t;
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes differ, " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (auto& v : c.data()) v *= s;
  return c;
}

void axpy(Tensor& a, const Tensor& b, double s) {
  require_same_shape(a, b, "axpy");
  double* pa = a.raw();
  const double* pb = b.raw();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += s * pb[i];
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const auto xi = x.row(i);
    auto yi = y.row(i);
    const double mx = *std::max_element(xi.begin(), xi.end());
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      s += yi[j];
    }
    for (std::size_t j = 0; j < n; ++j) yi[j] /= s;
  }
  return y;
}

std::vector<double> logsumexp_rows(const Tensor& x) {
  require_rank(x, 2, "logsumexp_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto xi = x.row(i);
    const double mx = *std::max_element(xi.begin(), xi.end());
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(xi[j] - mx);
    out[i] = mx + std::log(s);
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: lengths differ, " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Tensor l2_normalize(const Tensor& x) {
  const double n = l2_norm(x.data());
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw NumericError("l2_normalize: input has zero or non-finite norm");
  }
  Tensor y = x;
  for (auto& v : y.data()) v /= n;
  return y;
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_rank(x, 2, "l2_normalize_rows");
  Tensor y = x;
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    auto r = y.row(i);
    const double n = l2_norm(r);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw NumericError("l2_normalize_rows: row " + std::to_string(i) +
                         " has zero or non-finite norm");
    }
    for (auto& v : r) v /= n;
  }
  return y;
}

}  // namespace aura
