#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace aura {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  /// Builds a 2-D tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// 2-D element access (row, col). No bounds checking beyond rank 2 layout.
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  Tensor reshaped(Shape shape) const;
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  bool all_finite() const noexcept;
  void fill(double v);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Non-differentiable kernels. All loops accumulate in a fixed order so
// results are bit-reproducible for a given build.

/// a[M×K] · b[K×N]; each output sums over K left to right.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[M×K] · b[N×K]ᵀ.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// a[K×M]ᵀ · b[K×N].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// In-place a += s * b.
void axpy(Tensor& a, const Tensor& b, double s = 1.0);

/// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& x);
/// Row-wise log-sum-exp with max subtraction; returns a length-M vector.
std::vector<double> logsumexp_rows(const Tensor& x);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
/// Unit-norm copy of a vector; throws NumericError on the zero vector.
Tensor l2_normalize(const Tensor& x);
/// Normalizes every row of a 2-D tensor to unit length.
Tensor l2_normalize_rows(const Tensor& x);

void require_rank(const Tensor& t, std::size_t rank, const char* what);

}  // namespace aura
