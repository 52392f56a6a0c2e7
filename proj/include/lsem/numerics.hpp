#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lsem {

/// Dense row-major matrix of doubles. Vectors are 1×n matrices or plain
/// std::vector<double>, whichever reads better at the call site.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  std::vector<std::vector<double>> to_rows() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
/// Row vector times matrix: out_k = sum_j v_j * m(j, k).
std::vector<double> vecmat(std::span<const double> v, const Matrix& m);
/// Matrix times column vector: out_r = sum_c m(r, c) * v_c.
std::vector<double> matvec(const Matrix& m, std::span<const double> v);
/// Adds scale * v^T-weighted outer product: m += scale * a b^T.
void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b, double scale = 1.0);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
double sigmoid(double x);

/// FNV-1a over the raw bytes of every entry plus the shape.
std::uint64_t content_hash(const Matrix& m);

/// Seeded generator. The engine is std::mt19937_64, whose output sequence is
/// fixed by the standard; all conversions to doubles and integers are done
/// here so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  /// Seed for an independent stream, derived with splitmix64.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class OptimizerKind { adam, sgd };

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::adam;
  double step_size = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  OptimizerOptions options;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;
};

/// One adaptive-moment (or plain gradient) update. Moments are lazily sized
/// on the first step; afterwards every call must pass the same tensor shapes.
void optimizer_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                    OptimizerState& state);

// Gradient verification -------------------------------------------------------

/// Evaluates a loss at `point`; when `grad` is non-null it also receives the
/// analytic gradient (one tensor per entry of `point`, same shapes).
using DifferentiableLoss =
    std::function<double(const std::vector<Matrix>& point, std::vector<Matrix>* grad)>;

struct TensorGradCheck {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = true;
  std::string failure;
};

struct GradCheckReport {
  std::vector<TensorGradCheck> tensors;
  double epsilon = 0.0;
  double tolerance = 0.0;
  bool passed() const;
  std::string summary() const;
};

/// Entrywise denominators are floored at this value so that gradients at the
/// round-off level of the central difference do not count as mismatches.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares the analytic gradient against central differences for every entry
/// of every tensor. Per tensor, reports the worst |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const DifferentiableLoss& loss, const std::vector<std::string>& names,
                           std::vector<Matrix> point, double epsilon = 1e-5,
                           double tolerance = 1e-4);

}  // namespace lsem
