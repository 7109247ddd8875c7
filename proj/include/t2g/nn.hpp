#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "t2g/autodiff.hpp"

namespace t2g::nn {

using ad::Matrix;

// Named, ordered parameter matrices.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Matrix> values;

  // Uniform in +-1/sqrt(fan_in).
  void add_uniform(const std::string& name, int rows, int cols, int fan_in, std::mt19937_64& rng);
  void add_zero(const std::string& name, int rows, int cols);
  void add(const std::string& name, Matrix value);

  int index(const std::string& name) const;  // -1 when absent
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  std::size_t scalar_count() const;

  bool operator==(const ParamSet&) const = default;
};

// Parameters placed on a tape as gradient leaves.
struct Bound {
  const ParamSet* params = nullptr;
  std::vector<ad::Var> vars;

  ad::Var operator[](const std::string& name) const;
};

// Constants instead of gradient leaves when trainable is false.
Bound bind(ad::Tape& tape, const ParamSet& params, bool trainable = true);
std::vector<Matrix> gradients(const ad::Tape& tape, const Bound& bound);

// x W + b using parameters "<prefix>.w" and "<prefix>.b".
ad::Var dense(const Bound& p, const std::string& prefix, ad::Var x);
// Adds "<prefix>.w" (in x out) and "<prefix>.b" (1 x out).
void add_dense(ParamSet& params, const std::string& prefix, int in, int out, std::mt19937_64& rng);
void add_dense_zero(ParamSet& params, const std::string& prefix, int in, int out);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Parameters listed in `frozen` are left untouched.
  void step(ParamSet& params, const std::vector<Matrix>& grads, const std::vector<std::string>& frozen = {});

 private:
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<Matrix> m_, v_;
};

// Adamax with a learning rate per coordinate.
class Adamax {
 public:
  explicit Adamax(Eigen::VectorXd lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(std::move(lr)), beta1_(beta1), beta2_(beta2), eps_(eps),
        m_(Eigen::VectorXd::Zero(lr_.size())), u_(Eigen::VectorXd::Zero(lr_.size())) {}

  void step(Eigen::VectorXd& x, const Eigen::VectorXd& grad);

 private:
  Eigen::VectorXd lr_;
  double beta1_, beta2_, eps_;
  long step_ = 0;
  Eigen::VectorXd m_, u_;
};

}  // namespace t2g::nn
