#include "t2g/nn.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "t2g/error.hpp"

namespace t2g::nn {

void ParamSet::add(const std::string& name, Matrix value) {
  if (index(name) >= 0) throw Error(ErrorKind::kInvalidInput, fmt::format("duplicate parameter '{}'", name));
  names.push_back(name);
  values.push_back(std::move(value));
}

void ParamSet::add_uniform(const std::string& name, int rows, int cols, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  }
  add(name, std::move(m));
}

void ParamSet::add_zero(const std::string& name, int rows, int cols) { add(name, Matrix::Zero(rows, cols)); }

int ParamSet::index(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

Matrix& ParamSet::at(const std::string& name) {
  const int i = index(name);
  if (i < 0) throw Error(ErrorKind::kInvalidInput, fmt::format("unknown parameter '{}'", name));
  return values[static_cast<std::size_t>(i)];
}

const Matrix& ParamSet::at(const std::string& name) const { return const_cast<ParamSet*>(this)->at(name); }

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values) n += static_cast<std::size_t>(v.size());
  return n;
}

ad::Var Bound::operator[](const std::string& name) const {
  const int i = params->index(name);
  if (i < 0) throw Error(ErrorKind::kInvalidInput, fmt::format("unknown parameter '{}'", name));
  return vars[static_cast<std::size_t>(i)];
}

Bound bind(ad::Tape& tape, const ParamSet& params, bool trainable) {
  Bound b{&params, {}};
  b.vars.reserve(params.values.size());
  for (const auto& v : params.values) b.vars.push_back(trainable ? tape.leaf(v) : tape.constant(v));
  return b;
}

std::vector<Matrix> gradients(const ad::Tape& tape, const Bound& bound) {
  std::vector<Matrix> g;
  g.reserve(bound.vars.size());
  for (const auto& v : bound.vars) g.push_back(tape.grad(v));
  return g;
}

ad::Var dense(const Bound& p, const std::string& prefix, ad::Var x) {
  return ad::add(ad::matmul(x, p[prefix + ".w"]), p[prefix + ".b"]);
}

void add_dense(ParamSet& params, const std::string& prefix, int in, int out, std::mt19937_64& rng) {
  params.add_uniform(prefix + ".w", in, out, in, rng);
  params.add_uniform(prefix + ".b", 1, out, in, rng);
}

void add_dense_zero(ParamSet& params, const std::string& prefix, int in, int out) {
  params.add_zero(prefix + ".w", in, out);
  params.add_zero(prefix + ".b", 1, out);
}

void Adam::step(ParamSet& params, const std::vector<Matrix>& grads, const std::vector<std::string>& frozen) {
  if (grads.size() != params.values.size()) throw Error(ErrorKind::kInvalidInput, "Adam: gradient count mismatch");
  if (m_.empty()) {
    for (const auto& v : params.values) {
      m_.push_back(Matrix::Zero(v.rows(), v.cols()));
      v_.push_back(Matrix::Zero(v.rows(), v.cols()));
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (std::find(frozen.begin(), frozen.end(), params.names[i]) != frozen.end()) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
    params.values[i].array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

void Adamax::step(Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
  if (x.size() != lr_.size() || grad.size() != lr_.size()) {
    throw Error(ErrorKind::kInvalidInput, "Adamax: size mismatch");
  }
  ++step_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  u_ = (beta2_ * u_).cwiseMax(grad.cwiseAbs());
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  x.array() -= (lr_.array() / c1) * m_.array() / (u_.array() + eps_);
}

}  // namespace t2g::nn
