#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "riskgrad/errors.hpp"

namespace riskgrad {

// Fully connected scalar-output network with tanh hidden layers and a linear
// output, stored as one flat parameter vector. Backpropagation is derived by
// hand for the three uses the trainers need: value, parameter Jacobian of the
// output, and gradient of the output w.r.t. the input.
class Mlp {
 public:
  // sizes = {in, h1, ..., 1}; seeded scaled-normal init (1/sqrt(fan_in)).
  Mlp(std::vector<int> sizes, std::uint64_t seed);

  int input_dim() const { return sizes_.front(); }
  int num_params() const { return static_cast<int>(params_.size()); }

  const Eigen::VectorXd& params() const { return params_; }
  void set_params(const Eigen::VectorXd& p);

  double value(const Eigen::VectorXd& x) const;

  // dValue/dparams at x, flat layout matching params().
  Eigen::VectorXd param_jacobian(const Eigen::VectorXd& x) const;

  // dValue/dx at x.
  Eigen::VectorXd input_gradient(const Eigen::VectorXd& x) const;

  // Both of the above in one backward pass.
  void jacobians(const Eigen::VectorXd& x, Eigen::VectorXd* dparams,
                 Eigen::VectorXd* dinput) const;

 private:
  struct Layer {
    int in, out;
    int w_off, b_off;  // offsets into the flat parameter vector
  };
  Eigen::Map<const Eigen::MatrixXd> W(const Layer& l) const {
    return {params_.data() + l.w_off, l.out, l.in};
  }
  Eigen::Map<const Eigen::VectorXd> b(const Layer& l) const {
    return {params_.data() + l.b_off, l.out};
  }

  std::vector<int> sizes_;
  std::vector<Layer> layers_;
  Eigen::VectorXd params_;
};

}  // namespace riskgrad
