#include "riskgrad/mlp.hpp"

#include <cmath>

#include "riskgrad/rng.hpp"

namespace riskgrad {

Mlp::Mlp(std::vector<int> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2 || sizes_.back() != 1)
    throw ConfigError("Mlp: need at least two layers and scalar output");
  int offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    Layer lay{sizes_[l], sizes_[l + 1], offset, offset + sizes_[l] * sizes_[l + 1]};
    offset = lay.b_off + lay.out;
    layers_.push_back(lay);
  }
  params_.resize(offset);
  Rng rng(seed);
  for (const auto& l : layers_) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (int i = 0; i < l.in * l.out; ++i) params_[l.w_off + i] = scale * rng.normal();
    for (int i = 0; i < l.out; ++i) params_[l.b_off + i] = 0.0;
  }
}

void Mlp::set_params(const Eigen::VectorXd& p) {
  if (p.size() != params_.size()) throw DimensionError("Mlp::set_params: wrong size");
  params_ = p;
}

double Mlp::value(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) throw DimensionError("Mlp::value: wrong input size");
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    a = (W(layers_[l]) * a + b(layers_[l])).eval();
    if (l + 1 < layers_.size()) a = a.array().tanh().matrix();
  }
  return a[0];
}

void Mlp::jacobians(const Eigen::VectorXd& x, Eigen::VectorXd* dparams,
                    Eigen::VectorXd* dinput) const {
  if (x.size() != input_dim()) throw DimensionError("Mlp::jacobians: wrong input size");
  const std::size_t L = layers_.size();
  std::vector<Eigen::VectorXd> act(L + 1);  // act[l] = input of layer l
  act[0] = x;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::VectorXd z = W(layers_[l]) * act[l] + b(layers_[l]);
    act[l + 1] = (l + 1 < L) ? z.array().tanh().matrix() : z;
  }
  // backward: delta = dOut/d(pre-activation of layer l)
  Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
  if (dparams) dparams->setZero(params_.size());
  for (std::size_t l = L; l-- > 0;) {
    const Layer& lay = layers_[l];
    if (dparams) {
      Eigen::Map<Eigen::MatrixXd> dW(dparams->data() + lay.w_off, lay.out, lay.in);
      dW = delta * act[l].transpose();
      dparams->segment(lay.b_off, lay.out) = delta;
    }
    Eigen::VectorXd da = W(lay).transpose() * delta;
    if (l > 0) {
      // act[l] = tanh(z): dz = da * (1 - act^2)
      delta = (da.array() * (1.0 - act[l].array().square())).matrix();
    } else if (dinput) {
      *dinput = da;
    }
  }
}

Eigen::VectorXd Mlp::param_jacobian(const Eigen::VectorXd& x) const {
  Eigen::VectorXd dp;
  jacobians(x, &dp, nullptr);
  return dp;
}

Eigen::VectorXd Mlp::input_gradient(const Eigen::VectorXd& x) const {
  Eigen::VectorXd di;
  jacobians(x, nullptr, &di);
  return di;
}

}  // namespace riskgrad
