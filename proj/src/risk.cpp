#include "riskgrad/risk.hpp"

#include <cmath>

#include "riskgrad/parallel.hpp"

namespace riskgrad {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kSqrt2Pi = 2.5066282746310002;
}  // namespace

ChanceSpec::ChanceSpec(Eigen::VectorXd q_, double eps_, double delta_, double lambda_)
    : q(std::move(q_)), eps(eps_), delta(delta_), lambda(lambda_) {
  if (q.size() == 0 || q.norm() == 0.0) throw ConfigError("ChanceSpec: q must be nonzero");
  if (!(eps > 0.0)) throw ConfigError("ChanceSpec: eps must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("ChanceSpec: delta must be in (0,1)");
  if (!(lambda >= 0.0)) throw ConfigError("ChanceSpec: lambda must be >= 0");
}

double gaussian_upper_tail(double a) { return 0.5 * std::erfc(a / kSqrt2); }

double gaussian_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("gaussian_quantile: p must be in (0,1)");
  // Acklam's rational approximation, then two Newton corrections on erfc.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double u = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
        ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
  } else if (p <= 1.0 - plow) {
    const double u = p - 0.5, t = u * u;
    x = (((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * u /
        (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1.0);
  } else {
    const double u = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
        ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
  }
  for (int it = 0; it < 2; ++it) {
    const double err = gaussian_upper_tail(-x) - p;  // lower-tail CDF minus p
    const double pdf = std::exp(-0.5 * x * x) / kSqrt2Pi;
    x -= err / pdf;
  }
  return x;
}

double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const LtiSystem& sys) {
  if (x.size() != sys.state_dim() || u.size() != sys.input_dim())
    throw DimensionError("stage_cost: dimension mismatch");
  return x.dot(sys.Q * x) + u.dot(sys.R * u);
}

double reward(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& x_next,
              const LtiSystem& sys, const ChanceSpec& chance) {
  if (x_next.size() != sys.state_dim()) throw DimensionError("reward: x_next dimension");
  const double indicator = (chance.q.dot(x_next) >= chance.eps) ? 1.0 : 0.0;
  return -stage_cost(x, u, sys) - chance.lambda * (indicator - chance.delta);
}

Eigen::MatrixXd noise_covariance(const LtiSystem& sys, const LinearGaussianPolicy& policy) {
  return sys.SigmaW + sys.B * policy.SigmaSigma * sys.B.transpose();
}

Eigen::MatrixXd stationary_covariance(const LtiSystem& sys, const LinearGaussianPolicy& policy) {
  if (!is_stabilizing(sys, policy.K))
    throw InstabilityError("stationary_covariance: gain is not stabilizing");
  return solve_lyapunov(sys.A - sys.B * policy.K, noise_covariance(sys, policy));
}

double cost_J(const LtiSystem& sys, const LinearGaussianPolicy& policy) {
  if (!is_stabilizing(sys, policy.K)) throw InstabilityError("cost_J: gain is not stabilizing");
  const Eigen::MatrixXd Acl = sys.A - sys.B * policy.K;
  const Eigen::MatrixXd Swb = noise_covariance(sys, policy);
  const Eigen::MatrixXd Qk = sys.Q + policy.K.transpose() * sys.R * policy.K;
  const Eigen::MatrixXd SigK = solve_lyapunov(Acl, Swb);
  const Eigen::MatrixXd Pk = solve_lyapunov(Acl.transpose(), Qk);
  const double sigma_term = (sys.R * policy.SigmaSigma).trace();
  const double j1 = (Qk * SigK).trace() + sigma_term;
  const double j2 = (Pk * Swb).trace() + sigma_term;
  if (std::abs(j1 - j2) > 1e-9 * std::max(1.0, std::abs(j1)))
    throw NumericalError("cost_J: trace forms disagree beyond 1e-9 relative");
  return j1;
}

double cost_Jc(const LtiSystem& sys, const LinearGaussianPolicy& policy,
               const ChanceSpec& chance) {
  const Eigen::MatrixXd SigK = stationary_covariance(sys, policy);
  const double v = chance.q.dot(SigK * chance.q);
  if (!(v > 0.0)) throw NumericalError("cost_Jc: q' Sigma_K q <= 0 (degenerate direction)");
  return gaussian_upper_tail(chance.eps / std::sqrt(v));
}

double lagrangian(const LtiSystem& sys, const LinearGaussianPolicy& policy,
                  const ChanceSpec& chance) {
  return cost_J(sys, policy) + chance.lambda * (cost_Jc(sys, policy, chance) - chance.delta);
}

namespace {

struct StationaryParts {
  Eigen::MatrixXd Acl, Swb, SigK, Pk, Ek, gradJ;
  double V = 0.0;
};

StationaryParts stationary_parts(const LtiSystem& sys, const LinearGaussianPolicy& policy,
                                 const ChanceSpec& chance) {
  if (!is_stabilizing(sys, policy.K))
    throw InstabilityError("grad: gain is not stabilizing");
  StationaryParts s;
  s.Acl = sys.A - sys.B * policy.K;
  s.Swb = noise_covariance(sys, policy);
  s.SigK = solve_lyapunov(s.Acl, s.Swb);
  s.Pk = solve_lyapunov(s.Acl.transpose(),
                        sys.Q + policy.K.transpose() * sys.R * policy.K);
  s.Ek = (sys.R + sys.B.transpose() * s.Pk * sys.B) * policy.K -
         sys.B.transpose() * s.Pk * sys.A;
  s.gradJ = 2.0 * s.Ek * s.SigK;
  s.V = chance.q.dot(s.SigK * chance.q);
  if (!(s.V > 0.0)) throw NumericalError("grad: q' Sigma_K q <= 0 (degenerate direction)");
  return s;
}

}  // namespace

GradientBundle grad_closed_form(const LtiSystem& sys, const LinearGaussianPolicy& policy,
                                const ChanceSpec& chance) {
  const StationaryParts s = stationary_parts(sys, policy, chance);
  const Eigen::MatrixXd Lam =
      solve_lyapunov(s.Acl.transpose(), chance.q * chance.q.transpose());
  const double u = chance.eps / std::sqrt(s.V);
  const double phi = std::exp(-0.5 * u * u) / kSqrt2Pi;
  GradientBundle g;
  g.E_K = s.Ek;
  g.Sigma_K = s.SigK;
  g.P_K = s.Pk;
  g.gradJ = s.gradJ;
  g.gradJc = -chance.eps * phi / (s.V * std::sqrt(s.V)) *
             (sys.B.transpose() * Lam * s.Acl * s.SigK);
  g.gradL = g.gradJ + chance.lambda * g.gradJc;
  return g;
}

GradientBundle grad_analytic(const LtiSystem& sys, const LinearGaussianPolicy& policy,
                             const ChanceSpec& chance, std::int64_t mc_samples,
                             std::uint64_t seed) {
  if (mc_samples < 1) throw ConfigError("grad_analytic: mc_samples must be >= 1");
  const StationaryParts s = stationary_parts(sys, policy, chance);
  const Eigen::Index n = sys.state_dim();
  const Eigen::Index p = sys.input_dim();

  const double c2 = chance.q.dot(s.Swb * chance.q);
  const Eigen::VectorXd Aclq = s.Acl.transpose() * chance.q;   // a(x) = (eps - Aclq'x)/sqrt(c2)
  const Eigen::VectorXd Bq = sys.B.transpose() * chance.q;
  const Eigen::MatrixXd Lx = covariance_sqrt(s.SigK);
  const Eigen::MatrixXd SigInv = s.SigK.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
  const double jc_mean = gaussian_upper_tail(chance.eps / std::sqrt(s.V));

  // dSigma_K/dK_ij via one Lyapunov solve per gain entry; the distribution
  // term of the estimator contracts these against the sample score of
  // N(0, Sigma_K). The closed-form J_c value serves as the control-variate
  // baseline for that term.
  std::vector<Eigen::MatrixXd> M_half(static_cast<std::size_t>(p * n));
  std::vector<double> tr_term(static_cast<std::size_t>(p * n));
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::MatrixXd Rhs = -(sys.B.col(i) * s.SigK.row(j) * s.Acl.transpose() +
                              s.Acl * s.SigK.col(j) * sys.B.col(i).transpose());
      Rhs = 0.5 * (Rhs + Rhs.transpose()).eval();
      const Eigen::MatrixXd dSig = solve_lyapunov(s.Acl, Rhs);
      const std::size_t idx = static_cast<std::size_t>(i * n + j);
      M_half[idx] = SigInv * dSig * SigInv;
      tr_term[idx] = (SigInv * dSig).trace();
    }
  }

  const std::int64_t pairs = (mc_samples + 1) / 2;
  const unsigned shards = std::min<std::uint64_t>(thread_cap(), 16);
  const std::int64_t per_shard = (pairs + shards - 1) / shards;

  std::vector<Eigen::MatrixXd> partial(shards, Eigen::MatrixXd::Zero(p, n));
  parallel_for_indexed(shards, [&](std::size_t shard) {
    Rng rng(derive_seed(seed, shard));
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p, n);
    const std::int64_t lo = static_cast<std::int64_t>(shard) * per_shard;
    const std::int64_t hi = std::min<std::int64_t>(lo + per_shard, pairs);
    for (std::int64_t srow = lo; srow < hi; ++srow) {
      const Eigen::VectorXd z = Lx * rng.normal_vector(n);
      for (int sign = 0; sign < 2; ++sign) {
        const Eigen::VectorXd x = (sign == 0) ? z : Eigen::VectorXd(-z);
        const double a = (chance.eps - Aclq.dot(x)) / std::sqrt(c2);
        const double w = std::exp(-0.5 * a * a) / (kSqrt2Pi * std::sqrt(c2));
        const double qcentered = gaussian_upper_tail(a) - jc_mean;
        acc.noalias() += -w * Bq * x.transpose();
        for (Eigen::Index i = 0; i < p; ++i)
          for (Eigen::Index j = 0; j < n; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i * n + j);
            const double score = 0.5 * (x.dot(M_half[idx] * x) - tr_term[idx]);
            acc(i, j) += qcentered * score;
          }
      }
    }
    partial[shard] = acc;
  });

  Eigen::MatrixXd gJc = Eigen::MatrixXd::Zero(p, n);
  for (const auto& m : partial) gJc += m;  // fixed reduction order
  gJc /= static_cast<double>(2 * pairs);

  GradientBundle g;
  g.E_K = s.Ek;
  g.Sigma_K = s.SigK;
  g.P_K = s.Pk;
  g.gradJ = s.gradJ;
  g.gradJc = gJc;
  g.gradL = g.gradJ + chance.lambda * g.gradJc;
  return g;
}

}  // namespace riskgrad
