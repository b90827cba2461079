#include "deepsent/numkernel.hpp"

#include <algorithm>
#include <cmath>

namespace deepsent {

std::string shape_string(std::span<const Index> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + text + "' (expected sgd or adam)");
}

void optimizer_step(OptimizerState& state, std::span<Parameter* const> params) {
  if (!(state.learning_rate >= 0.0) || !std::isfinite(state.learning_rate)) {
    throw DomainError("optimizer: learning rate must be a non-negative finite number");
  }
  for (const Parameter* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw DimensionError("optimizer: gradient of '" + p->name + "' has shape " +
                           shape_string(p->grad) + ", value has " + shape_string(p->value));
    }
    if (!p->grad.allFinite()) {
      throw TrainingError("optimizer: non-finite gradient in parameter '" + p->name + "'");
    }
  }

  ++state.step;
  const double lr = state.learning_rate;

  if (state.kind == OptimizerKind::sgd) {
    for (Parameter* p : params) p->value -= lr * p->grad;
    return;
  }

  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (Parameter* p : params) {
    auto [it, inserted] = state.moments.try_emplace(p->name);
    AdamMoments& m = it->second;
    if (inserted) {
      m.first = Matrix::Zero(p->value.rows(), p->value.cols());
      m.second = Matrix::Zero(p->value.rows(), p->value.cols());
    } else if (m.first.rows() != p->value.rows() || m.first.cols() != p->value.cols()) {
      throw DimensionError("optimizer: moment shape mismatch for '" + p->name + "'");
    }
    for (Index i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.data()[i];
      double& m1 = m.first.data()[i];
      double& m2 = m.second.data()[i];
      m1 = state.beta1 * m1 + (1.0 - state.beta1) * g;
      m2 = state.beta2 * m2 + (1.0 - state.beta2) * g * g;
      const double m_hat = m1 / correction1;
      const double v_hat = m2 / correction2;
      p->value.data()[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

GradCheckResult finite_difference_check(const std::function<double()>& loss_fn,
                                        std::span<Parameter* const> params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw DomainError("finite_difference_check: eps must lie in [1e-7, 1e-3]");
  }
  const double base1 = loss_fn();
  const double base2 = loss_fn();
  if (base1 != base2) {
    throw CheckError("finite_difference_check: loss function is not deterministic");
  }

  GradCheckResult result;
  for (Parameter* p : params) {
    if (p->grad.size() != p->value.size()) {
      throw DimensionError("finite_difference_check: gradient shape mismatch for '" + p->name + "'");
    }
    GradCheckEntry entry{p->name};
    for (Index i = 0; i < p->value.size(); ++i) {
      double& v = p->value.data()[i];
      const double saved = v;
      v = saved + eps;
      const double plus = loss_fn();
      v = saved - eps;
      const double minus = loss_fn();
      v = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = p->grad.data()[i];
      double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      if (std::isnan(err)) err = INFINITY;
      if (entry.worst_index < 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    if (entry.worst_index >= 0 &&
        (result.worst_parameter.empty() || entry.max_rel_error > result.max_rel_error)) {
      result.max_rel_error = entry.max_rel_error;
      result.worst_parameter = entry.name;
    }
    result.per_parameter.push_back(std::move(entry));
  }
  return result;
}

}  // namespace deepsent
