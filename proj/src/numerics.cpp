#include "lsem/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace lsem {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument("matrix data length " + std::to_string(data_.size()) +
                                " does not match shape " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<std::vector<double>> copy;
  for (const auto& r : rows) copy.emplace_back(r);
  return from_rows(copy);
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw std::invalid_argument("ragged rows in Matrix::from_rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(rows.size(), cols, std::move(data));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<std::vector<double>> Matrix::to_rows() const {
  std::vector<std::vector<double>> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r].assign(row(r).begin(), row(r).end());
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul shape mismatch: " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " times " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

std::vector<double> vecmat(std::span<const double> v, const Matrix& m) {
  if (v.size() != m.rows()) throw std::invalid_argument("vecmat shape mismatch");
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t j = 0; j < m.rows(); ++j)
    for (std::size_t k = 0; k < m.cols(); ++k) out[k] += v[j] * m(j, k);
  return out;
}

std::vector<double> matvec(const Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) throw std::invalid_argument("matvec shape mismatch");
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), v);
  return out;
}

void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b, double scale) {
  if (a.size() != m.rows() || b.size() != m.cols()) throw std::invalid_argument("add_outer shape mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double ar = scale * a[r];
    if (ar == 0.0) continue;
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) += ar * b[c];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double ex = std::exp(x);
  return ex / (1.0 + ex);
}

std::uint64_t content_hash(const Matrix& m) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix(m.rows());
  mix(m.cols());
  for (double v : m.values()) mix(std::bit_cast<std::uint64_t>(v));
  return h;
}

// Rng ---------------------------------------------------------------------------

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below requires n > 0");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

std::uint64_t Rng::derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Optimizer ---------------------------------------------------------------------

void optimizer_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                    OptimizerState& state) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("optimizer_step: " + std::to_string(params.size()) +
                                " parameters but " + std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i])) {
      throw std::invalid_argument("optimizer_step: gradient " + std::to_string(i) +
                                  " does not match its parameter shape");
    }
  }
  const auto& opt = state.options;
  if (opt.kind == OptimizerKind::adam) {
    if (state.first_moment.empty()) {
      for (const Matrix* p : params) {
        state.first_moment.emplace_back(p->rows(), p->cols());
        state.second_moment.emplace_back(p->rows(), p->cols());
      }
    }
    if (state.first_moment.size() != params.size()) {
      throw std::invalid_argument("optimizer_step: parameter count changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!state.first_moment[i].same_shape(*params[i])) {
        throw std::invalid_argument("optimizer_step: accumulator shape mismatch for tensor " +
                                    std::to_string(i));
      }
    }
  }

  ++state.step;
  if (opt.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->values();
      auto g = grads[i]->values();
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= opt.step_size * g[k];
    }
    return;
  }

  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(opt.beta1, t);
  const double correction2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i]->values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g[k];
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= opt.step_size * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  }
}

// Gradient check ----------------------------------------------------------------

bool GradCheckReport::passed() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const auto& t) { return t.passed; });
}

std::string GradCheckReport::summary() const {
  std::ostringstream out;
  for (const auto& t : tensors) {
    out << (t.passed ? "ok   " : "FAIL ") << t.name << " max_rel_err=" << t.max_relative_error;
    if (!t.passed) {
      out << " at [" << t.worst_index << "] analytic=" << t.analytic << " numeric=" << t.numeric;
      if (!t.failure.empty()) out << " (" << t.failure << ")";
    }
    out << '\n';
  }
  return out.str();
}

GradCheckReport grad_check(const DifferentiableLoss& loss, const std::vector<std::string>& names,
                           std::vector<Matrix> point, double epsilon, double tolerance) {
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) {
    throw std::invalid_argument("grad_check: epsilon must lie in (0, 1e-3]");
  }
  if (names.size() != point.size()) throw std::invalid_argument("grad_check: one name per tensor");

  GradCheckReport report;
  report.epsilon = epsilon;
  report.tolerance = tolerance;

  std::vector<Matrix> analytic;
  const double base = loss(point, &analytic);
  if (analytic.size() != point.size()) {
    throw std::invalid_argument("grad_check: loss returned the wrong number of gradients");
  }

  for (std::size_t t = 0; t < point.size(); ++t) {
    TensorGradCheck check;
    check.name = names[t];
    if (!analytic[t].same_shape(point[t])) {
      check.passed = false;
      check.failure = "analytic gradient shape mismatch";
      report.tensors.push_back(std::move(check));
      continue;
    }
    if (!std::isfinite(base)) {
      check.passed = false;
      check.failure = "non-finite loss at the base point";
      report.tensors.push_back(std::move(check));
      continue;
    }
    auto values = point[t].values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + epsilon;
      const double plus = loss(point, nullptr);
      values[k] = saved - epsilon;
      const double minus = loss(point, nullptr);
      values[k] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        check.passed = false;
        check.worst_index = k;
        check.failure = "non-finite loss at probe point";
        break;
      }
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic[t].values()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      const double rel = std::abs(a - numeric) / denom;
      if (k == 0 || rel > check.max_relative_error) {
        check.max_relative_error = rel;
        check.worst_index = k;
        check.analytic = a;
        check.numeric = numeric;
      }
    }
    if (check.failure.empty()) check.passed = check.max_relative_error < tolerance;
    report.tensors.push_back(std::move(check));
  }
  return report;
}

}  // namespace lsem
