#include "riskgrad/baselines.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace riskgrad {

namespace {

// Coordinates: svec(X) | vec(Y) | svec(P), off-diagonal entries unscaled
// (the basis matrices carry the symmetry).
struct Coords {
  Eigen::Index n, p, nX, nY, nP, m;
  explicit Coords(Eigen::Index n_, Eigen::Index p_)
      : n(n_), p(p_), nX(n_ * (n_ + 1) / 2), nY(p_ * n_), nP(p_ * (p_ + 1) / 2),
        m(nX + nY + nP) {}

  void unpack(const Eigen::VectorXd& th, Eigen::MatrixXd& X, Eigen::MatrixXd& Y,
              Eigen::MatrixXd& P) const {
    X.setZero(n, n);
    Y.setZero(p, n);
    P.setZero(p, p);
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) {
        X(i, j) = X(j, i) = th[idx++];
      }
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < n; ++j) Y(i, j) = th[idx++];
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = i; j < p; ++j) {
        P(i, j) = P(j, i) = th[idx++];
      }
  }

  Eigen::VectorXd pack(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                       const Eigen::MatrixXd& P) const {
    Eigen::VectorXd th(m);
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) th[idx++] = X(i, j);
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < n; ++j) th[idx++] = Y(i, j);
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = i; j < p; ++j) th[idx++] = P(i, j);
    return th;
  }
};

struct Blocks {
  Eigen::MatrixXd M1, M2;
  double slack = 0.0;
};

class BarrierProblem {
 public:
  BarrierProblem(const LtiSystem& sys, const Eigen::MatrixXd& W, const Eigen::VectorXd& q,
                 double rhs)
      : sys_(sys), W_(W), q_(q), rhs_(rhs), co_(sys.state_dim(), sys.input_dim()),
        Rhalf_(Eigen::LLT<Eigen::MatrixXd>(sys.R).matrixL()) {
    // constant derivative blocks per coordinate (all constraints are affine)
    dM1_.resize(co_.m);
    dM2_.resize(co_.m);
    qXq_.resize(co_.m);
    cvec_.resize(co_.m);
    for (Eigen::Index k = 0; k < co_.m; ++k) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(co_.m);
      e[k] = 1.0;
      Eigen::MatrixXd dX, dY, dP;
      co_.unpack(e, dX, dY, dP);
      dM1_[k] = m1(dX, dY, dP);
      dM2_[k] = m2(dX, dY);
      qXq_[k] = q_.dot(dX * q_);
      cvec_[k] = (sys_.Q * dX).trace() + dP.trace();
    }
  }

  const Coords& coords() const { return co_; }
  double objective(const Eigen::VectorXd& th) const { return cvec_.dot(th); }

  Eigen::MatrixXd m1(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                     const Eigen::MatrixXd& P) const {
    const Eigen::Index n = co_.n, p = co_.p;
    Eigen::MatrixXd M(p + n, p + n);
    const Eigen::MatrixXd RY = Rhalf_.transpose() * Y;
    M.topLeftCorner(p, p) = P;
    M.topRightCorner(p, n) = RY;
    M.bottomLeftCorner(n, p) = RY.transpose();
    M.bottomRightCorner(n, n) = X;
    return M;
  }

  Eigen::MatrixXd m2(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const {
    const Eigen::Index n = co_.n;
    Eigen::MatrixXd M(2 * n, 2 * n);
    const Eigen::MatrixXd AXBY = sys_.A * X + sys_.B * Y;
    M.topLeftCorner(n, n) = X - W_;
    M.topRightCorner(n, n) = AXBY;
    M.bottomLeftCorner(n, n) = AXBY.transpose();
    M.bottomRightCorner(n, n) = X;
    return M;
  }

  Blocks eval(const Eigen::VectorXd& th) const {
    Eigen::MatrixXd X, Y, P;
    co_.unpack(th, X, Y, P);
    Blocks b;
    b.M1 = m1(X, Y, P);
    b.M2 = m2(X, Y);
    b.slack = rhs_ - q_.dot(X * q_);
    return b;
  }

  // strict feasibility via Cholesky
  bool feasible(const Eigen::VectorXd& th, Blocks* out = nullptr) const {
    Blocks b = eval(th);
    if (b.slack <= 0.0) return false;
    Eigen::LLT<Eigen::MatrixXd> l1(b.M1);
    if (l1.info() != Eigen::Success) return false;
    Eigen::LLT<Eigen::MatrixXd> l2(b.M2);
    if (l2.info() != Eigen::Success) return false;
    if (out) *out = std::move(b);
    return true;
  }

  double barrier_value(double t, const Eigen::VectorXd& th) const {
    Blocks b;
    if (!feasible(th, &b)) return std::numeric_limits<double>::infinity();
    const auto logdet = [](const Eigen::MatrixXd& M) {
      Eigen::LLT<Eigen::MatrixXd> llt(M);
      return 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    };
    return t * objective(th) - logdet(b.M1) - logdet(b.M2) - std::log(b.slack);
  }

  void gradient_hessian(double t, const Eigen::VectorXd& th, Eigen::VectorXd& g,
                        Eigen::MatrixXd& H) const {
    Blocks b = eval(th);
    const Eigen::MatrixXd M1i = b.M1.ldlt().solve(
        Eigen::MatrixXd::Identity(b.M1.rows(), b.M1.cols()));
    const Eigen::MatrixXd M2i = b.M2.ldlt().solve(
        Eigen::MatrixXd::Identity(b.M2.rows(), b.M2.cols()));
    std::vector<Eigen::MatrixXd> T1(co_.m), T2(co_.m);
    g.resize(co_.m);
    for (Eigen::Index k = 0; k < co_.m; ++k) {
      T1[k] = M1i * dM1_[k];
      T2[k] = M2i * dM2_[k];
      g[k] = t * cvec_[k] - T1[k].trace() - T2[k].trace() + qXq_[k] / b.slack;
    }
    H.resize(co_.m, co_.m);
    for (Eigen::Index k = 0; k < co_.m; ++k)
      for (Eigen::Index l = k; l < co_.m; ++l) {
        const double v = T1[k].cwiseProduct(T1[l].transpose()).sum() +
                         T2[k].cwiseProduct(T2[l].transpose()).sum() +
                         qXq_[k] * qXq_[l] / (b.slack * b.slack);
        H(k, l) = H(l, k) = v;
      }
  }

  double barrier_nu() const {
    return static_cast<double>(co_.n + co_.p + 2 * co_.n + 1);
  }

 private:
  const LtiSystem& sys_;
  Eigen::MatrixXd W_;
  Eigen::VectorXd q_;
  double rhs_;
  Coords co_;
  Eigen::MatrixXd Rhalf_;
  std::vector<Eigen::MatrixXd> dM1_, dM2_;
  Eigen::VectorXd qXq_, cvec_;
};

}  // namespace

ClqrSolution clqr_solve(const LtiSystem& sys, const ChanceSpec& chance) {
  if (!(chance.delta < 0.5))
    throw ConfigError("clqr_solve: delta must be < 0.5 so the quantile is positive");
  const Eigen::Index n = sys.state_dim(), p = sys.input_dim();
  const double quant = gaussian_quantile(1.0 - chance.delta);
  const double alpha = 1.0 / (quant * quant);
  const double rhs = alpha * chance.eps * chance.eps;
  const Eigen::MatrixXd& W = sys.SigmaW;

  BarrierProblem prob(sys, W, chance.q, rhs);
  const Coords& co = prob.coords();

  // phase-I: gain from LQR with the q-direction weighted progressively harder
  // until the chance constraint holds strictly
  Eigen::VectorXd th;
  bool found = false;
  const double wtrace = std::max(1.0, W.trace() / static_cast<double>(n));
  for (double c : {0.0, 1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6}) {
    Eigen::MatrixXd Qa = sys.Q + c * chance.q * chance.q.transpose();
    LtiSystem aug(sys.A, sys.B, Qa, sys.R, sys.SigmaW);
    Eigen::MatrixXd K;
    try {
      K = lqr_gain(aug);
    } catch (const SolverError&) {
      continue;
    }
    const Eigen::MatrixXd Acl = sys.A - sys.B * K;
    const Eigen::MatrixXd X0 =
        solve_lyapunov(Acl, W + 1e-3 * wtrace * Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd Y0 = -K * X0;
    const Eigen::MatrixXd RY = Eigen::MatrixXd(Eigen::LLT<Eigen::MatrixXd>(sys.R).matrixL())
                                   .transpose() * Y0;
    const Eigen::MatrixXd P0 =
        RY * X0.ldlt().solve(RY.transpose()) + Eigen::MatrixXd::Identity(p, p);
    Eigen::VectorXd cand = co.pack(X0, Y0, P0);
    if (prob.feasible(cand)) {
      th = std::move(cand);
      found = true;
      break;
    }
  }
  if (!found)
    throw SolverError("clqr_solve: no strictly feasible start found (problem infeasible?)");

  ClqrSolution sol;
  const double nu = prob.barrier_nu();
  double t = 1.0 / std::max(1.0, std::abs(prob.objective(th)));
  const double gap_tol = 1e-10;
  int outer = 0;
  while (nu / t > gap_tol * std::max(1.0, std::abs(prob.objective(th)))) {
    if (++outer > 60) throw SolverError("clqr_solve: barrier failed to reach target gap");
    for (int newton = 0; newton < 100; ++newton) {
      Eigen::VectorXd g;
      Eigen::MatrixXd H;
      prob.gradient_hessian(t, th, g, H);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
      Eigen::VectorXd dir = -ldlt.solve(g);
      double decrement = -g.dot(dir);
      if (!(decrement > 0.0)) {
        H.diagonal().array() += 1e-12 * (1.0 + H.diagonal().maxCoeff());
        dir = -H.ldlt().solve(g);
        decrement = -g.dot(dir);
        if (!(decrement > 0.0)) break;
      }
      if (decrement * 0.5 < 1e-11) break;
      const double f0 = prob.barrier_value(t, th);
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::VectorXd cand = th + step * dir;
        const double fc = prob.barrier_value(t, cand);
        if (fc < f0 - 1e-12 * std::abs(f0)) {
          th = cand;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    sol.barrier_trace.push_back(prob.objective(th));
    t *= 10.0;
  }

  Eigen::MatrixXd X, Y, P;
  co.unpack(th, X, Y, P);
  sol.X = X;
  sol.Y = Y;
  sol.P = P;
  sol.alpha = alpha;
  sol.objective = prob.objective(th);
  sol.K = -X.transpose().ldlt().solve(Y.transpose()).transpose();  // -Y X^-1
  if (!is_stabilizing(sys, sol.K))
    throw SolverError("clqr_solve: recovered gain is not stabilizing");
  return sol;
}

}  // namespace riskgrad
