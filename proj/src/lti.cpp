#include "riskgrad/lti.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include "riskgrad/risk.hpp"

namespace riskgrad {

namespace {

constexpr double kSymTol = 1e-10;
constexpr double kDivergenceGuard = 1e12;

void require_symmetric(const Eigen::MatrixXd& M, const char* name) {
  if (M.rows() != M.cols()) throw DimensionError(std::string(name) + " must be square");
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > kSymTol)
    throw DimensionError(std::string(name) + " must be symmetric (tol 1e-10)");
}

void require_psd(const Eigen::MatrixXd& M, const char* name, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < floor)
    throw DimensionError(std::string(name) + (floor == 0.0 ? " must be positive semidefinite"
                                                           : " must be positive definite"));
}

void require_finite(const Eigen::MatrixXd& M, const char* name) {
  if (!M.allFinite()) throw DimensionError(std::string(name) + " has non-finite entries");
}

}  // namespace

LtiSystem::LtiSystem(Eigen::MatrixXd A_, Eigen::MatrixXd B_, Eigen::MatrixXd Q_,
                     Eigen::MatrixXd R_, Eigen::MatrixXd SigmaW_)
    : A(std::move(A_)), B(std::move(B_)), Q(std::move(Q_)), R(std::move(R_)),
      SigmaW(std::move(SigmaW_)) {
  const Eigen::Index n = A.rows();
  const Eigen::Index p = B.cols();
  if (A.cols() != n) throw DimensionError("A must be square");
  if (B.rows() != n) throw DimensionError("B row count must match A");
  require_finite(A, "A");
  require_finite(B, "B");
  require_symmetric(Q, "Q");
  require_symmetric(R, "R");
  require_symmetric(SigmaW, "SigmaW");
  if (Q.rows() != n) throw DimensionError("Q dimension must match A");
  if (R.rows() != p) throw DimensionError("R dimension must match B columns");
  if (SigmaW.rows() != n) throw DimensionError("SigmaW dimension must match A");
  require_psd(Q, "Q", 1e-12);
  require_psd(R, "R", 1e-12);
  require_psd(SigmaW, "SigmaW", -kSymTol);
}

LinearGaussianPolicy::LinearGaussianPolicy(Eigen::MatrixXd K_, Eigen::MatrixXd SigmaSigma_)
    : K(std::move(K_)), SigmaSigma(std::move(SigmaSigma_)) {
  require_symmetric(SigmaSigma, "SigmaSigma");
  if (SigmaSigma.rows() != K.rows())
    throw DimensionError("SigmaSigma dimension must match gain rows");
  require_psd(SigmaSigma, "SigmaSigma", -kSymTol);
}

double spectral_radius(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw DimensionError("spectral_radius: matrix must be square");
  if (!M.allFinite()) throw DimensionError("spectral_radius: non-finite entries");
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_stabilizing(const LtiSystem& sys, const Eigen::MatrixXd& K, double margin) {
  if (K.rows() != sys.input_dim() || K.cols() != sys.state_dim())
    throw DimensionError("is_stabilizing: gain has wrong shape");
  return spectral_radius(sys.A - sys.B * K) < 1.0 - margin;
}

Eigen::MatrixXd solve_dare(const LtiSystem& sys, int max_iter) {
  const Eigen::MatrixXd& A = sys.A;
  const Eigen::MatrixXd& B = sys.B;
  Eigen::MatrixXd S = sys.Q;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd BtSA = B.transpose() * S * A;
    const Eigen::MatrixXd G = B.transpose() * S * B + sys.R;
    const Eigen::MatrixXd Snew =
        A.transpose() * S * A + sys.Q - BtSA.transpose() * G.ldlt().solve(BtSA);
    const double diff = (Snew - S).norm();
    S = 0.5 * (Snew + Snew.transpose());
    if (diff <= 1e-12 * std::max(1.0, S.norm())) break;
  }
  // residual check doubles as the stabilizability test
  const Eigen::MatrixXd BtSA = B.transpose() * S * A;
  const Eigen::MatrixXd G = B.transpose() * S * B + sys.R;
  const Eigen::MatrixXd resid =
      S - (A.transpose() * S * A + sys.Q - BtSA.transpose() * G.ldlt().solve(BtSA));
  if (!S.allFinite() || resid.norm() > 1e-9)
    throw SolverError("solve_dare: no convergence within iteration budget "
                      "(is (A,B) stabilizable?)");
  return S;
}

Eigen::MatrixXd lqr_gain(const LtiSystem& sys) {
  const Eigen::MatrixXd S = solve_dare(sys);
  const Eigen::MatrixXd G = sys.B.transpose() * S * sys.B + sys.R;
  return G.ldlt().solve(sys.B.transpose() * S * sys.A);
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& Acl, const Eigen::MatrixXd& W) {
  const Eigen::Index n = Acl.rows();
  if (Acl.cols() != n || W.rows() != n || W.cols() != n)
    throw DimensionError("solve_lyapunov: dimension mismatch");
  if (spectral_radius(Acl) >= 1.0)
    throw InstabilityError("solve_lyapunov: rho(Acl) >= 1, no stationary solution");
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n * n, n * n);
  const Eigen::MatrixXd M = I - Eigen::kroneckerProduct(Acl, Acl);
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(W.data(), n * n);
  Eigen::VectorXd x = M.partialPivLu().solve(w);
  Eigen::MatrixXd X = Eigen::Map<Eigen::MatrixXd>(x.data(), n, n);
  return 0.5 * (X + X.transpose());
}

Trajectory rollout(const LtiSystem& sys, const LinearGaussianPolicy& policy,
                   const ChanceSpec& chance, Eigen::Index T, const Eigen::VectorXd& x0,
                   std::uint64_t seed) {
  const Eigen::Index n = sys.state_dim();
  const Eigen::Index p = sys.input_dim();
  if (T < 1) throw ConfigError("rollout: T must be >= 1");
  if (x0.size() != n) throw DimensionError("rollout: x0 has wrong dimension");
  if (policy.K.rows() != p || policy.K.cols() != n)
    throw DimensionError("rollout: gain has wrong shape");

  const Eigen::MatrixXd Lw = covariance_sqrt(sys.SigmaW);
  const Eigen::MatrixXd Ls = covariance_sqrt(policy.SigmaSigma);
  const bool noise_w = sys.SigmaW.any();
  const bool noise_s = policy.SigmaSigma.any();

  Rng rng(seed);
  Trajectory traj;
  traj.seed = seed;
  traj.steps.reserve(static_cast<std::size_t>(T));

  Eigen::VectorXd x = x0;
  for (Eigen::Index k = 0; k < T; ++k) {
    Eigen::VectorXd u = -policy.K * x;
    if (noise_s) u += Ls * rng.normal_vector(p);
    Eigen::VectorXd xn = sys.A * x + sys.B * u;
    if (noise_w) xn += Lw * rng.normal_vector(n);
    if (xn.norm() > kDivergenceGuard)
      throw DivergenceError("rollout: state norm exceeded 1e12 at step " + std::to_string(k),
                            static_cast<long>(k));
    const double r = reward(x, u, xn, sys, chance);
    traj.steps.push_back({x, u, r, xn});
    x = xn;
  }
  return traj;
}

}  // namespace riskgrad
