#pragma once

// Dense numeric kernel: tensor aliases, activations, loss, optimizers and the
// central-difference gradient checker that every backward pass is held to.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "deepsent/errors.hpp"

namespace deepsent {

using Index = Eigen::Index;

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

/// Floor added inside the log of the cross-entropy.
inline constexpr double kLogFloor = 1e-12;

/// N-d row-major array. Used where rank differs from 2 (pixel images).
struct Tensor {
  std::vector<Index> shape;
  Vector data;

  Tensor() = default;
  explicit Tensor(std::vector<Index> dims) : shape(std::move(dims)) {
    Index n = 1;
    for (Index d : shape) {
      if (d <= 0) throw DimensionError("tensor dimensions must be positive");
      n *= d;
    }
    data = Vector::Zero(n);
  }

  Index size() const { return data.size(); }
  Index rank() const { return static_cast<Index>(shape.size()); }
  bool operator==(const Tensor& other) const {
    return shape == other.shape && data == other.data;
  }
};

std::string shape_string(std::span<const Index> shape);

template <class Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  const Index dims[2] = {m.rows(), m.cols()};
  return shape_string(std::span<const Index>(dims, 2));
}

/// Trainable weight together with its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }
};

/// Matrix product with a fixed accumulation order: every output entry is
/// summed over the inner index in ascending order starting from zero.
template <class DA, class DB>
MatrixX<typename DA::Scalar> matmul(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a) + " by " + shape_string(b));
  }
  const Index m = a.rows(), k = a.cols(), n = b.cols();
  MatrixX<Scalar> c = MatrixX<Scalar>::Zero(m, n);
  for (Index i = 0; i < m; ++i) {
    for (Index p = 0; p < k; ++p) {
      const Scalar aip = a.coeff(i, p);
      for (Index j = 0; j < n; ++j) c.coeffRef(i, j) += aip * b.coeff(p, j);
    }
  }
  return c;
}

/// Matrix-vector product, same ordering rule as matmul.
template <class DA, class DX>
VectorX<typename DA::Scalar> matvec(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DX>& x) {
  using Scalar = typename DA::Scalar;
  if (a.cols() != x.size()) {
    throw DimensionError("matvec: cannot multiply " + shape_string(a) + " by vector of length " +
                         std::to_string(x.size()));
  }
  VectorX<Scalar> y(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    Scalar s = 0;
    for (Index p = 0; p < a.cols(); ++p) s += a.coeff(i, p) * x.coeff(p);
    y[i] = s;
  }
  return y;
}

/// Numerically stable softmax (max subtraction).
template <class Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw DomainError("softmax: empty input");
  const Scalar top = logits.maxCoeff();
  VectorX<Scalar> out(logits.size());
  Scalar total = 0;
  for (Index i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits.coeff(i) - top);
    total += out[i];
  }
  out /= total;
  return out;
}

/// -log(pred[label] + 1e-12), clamped at 0 so a certain prediction costs
/// nothing rather than -1e-12.
template <class Derived>
typename Derived::Scalar cross_entropy(const Eigen::MatrixBase<Derived>& pred, Index label) {
  if (label < 0 || label >= pred.size()) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                     std::to_string(pred.size()) + ")");
  }
  using Scalar = typename Derived::Scalar;
  const Scalar shifted = pred.coeff(label) + static_cast<Scalar>(kLogFloor);
  return shifted >= 1 ? Scalar(0) : -std::log(shifted);
}

/// Gradient of cross_entropy(softmax(z), label) with respect to z, exact
/// including the log floor.
template <class Derived>
VectorX<typename Derived::Scalar> cross_entropy_logit_grad(const Eigen::MatrixBase<Derived>& pred,
                                                           Index label) {
  using Scalar = typename Derived::Scalar;
  if (label < 0 || label >= pred.size()) throw IndexError("cross_entropy: label out of range");
  const Scalar py = pred.coeff(label);
  if (py + static_cast<Scalar>(kLogFloor) >= 1) return VectorX<Scalar>::Zero(pred.size());
  const Scalar scale = py / (py + static_cast<Scalar>(kLogFloor));
  VectorX<Scalar> g = pred;
  g[label] -= 1;
  return scale * g;
}

/// Index of the largest entry; ties go to the lowest index.
template <class Derived>
Index argmax(const Eigen::MatrixBase<Derived>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v.coeff(i) > v.coeff(best)) best = i;
  }
  return best;
}

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& text);

struct AdamMoments {
  Matrix first;
  Matrix second;
};

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, AdamMoments> moments;  // keyed by parameter name

  static OptimizerState sgd(double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::sgd;
    s.learning_rate = lr;
    return s;
  }
  static OptimizerState adam(double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::adam;
    s.learning_rate = lr;
    return s;
  }
};

/// Applies one update to every parameter from its accumulated gradient.
/// Throws TrainingError (naming the parameter) before touching anything if a
/// gradient is non-finite.
void optimizer_step(OptimizerState& state, std::span<Parameter* const> params);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::vector<GradCheckEntry> per_parameter;
};

/// Compares the gradients already stored in `params` against central
/// differences of `loss_fn`. The error per entry is
/// |analytic - numeric| / max(1, |numeric|). Parameter values are restored.
GradCheckResult finite_difference_check(const std::function<double()>& loss_fn,
                                        std::span<Parameter* const> params, double eps = 1e-6);

}  // namespace deepsent
