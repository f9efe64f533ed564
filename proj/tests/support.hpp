#pragma once

// Shared helpers for the test binaries: random problem generation, an
// unconstrained finite-horizon LQR reference and an exhaustive projection.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

#include "mpcc/geometry.hpp"
#include "mpcc/qp/problem.hpp"

namespace mpcc::testing {

using DynQp = qp::StructuredQp<Eigen::Dynamic, Eigen::Dynamic>;

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

/// Random convex stage-structured QP that is feasible by construction: the
/// bounds are placed around a simulated reference trajectory.
inline DynQp random_qp(std::mt19937_64& rng, int N, int n, int m, bool bounded = true) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DynQp qp = DynQp::zero(N, n, m);
  qp.x0 = random_matrix(rng, n, 1);
  auto joint_cost = [&](Eigen::MatrixXd& Q, Eigen::MatrixXd& R, Eigen::MatrixXd& S) {
    const Eigen::MatrixXd L = random_matrix(rng, n + m, n + m, 0.5);
    Eigen::MatrixXd W = L * L.transpose();
    W.diagonal().array() += 0.1;
    Q = W.topLeftCorner(n, n);
    R = W.bottomRightCorner(m, m);
    S = W.bottomLeftCorner(m, n);
  };
  for (auto& st : qp.stages) {
    st.A = Eigen::MatrixXd::Identity(n, n) + random_matrix(rng, n, n, 0.3);
    st.B = random_matrix(rng, n, m);
    st.g = random_matrix(rng, n, 1, 0.1);
    Eigen::MatrixXd Q, R, S;
    joint_cost(Q, R, S);
    st.Q = Q;
    st.R = R;
    st.S = S;
    st.q = random_matrix(rng, n, 1);
    st.r = random_matrix(rng, m, 1);
  }
  const Eigen::MatrixXd LN = random_matrix(rng, n, n, 0.5);
  qp.Q_N = LN * LN.transpose();
  qp.q_N = random_matrix(rng, n, 1);
  if (!bounded) return qp;

  std::vector<Eigen::VectorXd> us;
  for (int k = 0; k < N; ++k) us.push_back(random_matrix(rng, m, 1, 0.5));
  const auto xs = qp::simulate(qp, us);
  auto place = [&](double centre, double& lo, double& hi) {
    const double p = unit(rng);
    if (p < 0.3) return;  // unbounded component
    const double w_lo = 0.05 + unit(rng), w_hi = 0.05 + unit(rng);
    if (p < 0.5) {
      lo = centre - w_lo;
    } else if (p < 0.7) {
      hi = centre + w_hi;
    } else {
      lo = centre - w_lo;
      hi = centre + w_hi;
    }
  };
  for (int k = 0; k < N; ++k) {
    auto& st = qp.stages[k];
    for (int i = 0; i < m; ++i) place(us[k](i), st.u_lower(i), st.u_upper(i));
    if (k > 0)
      for (int i = 0; i < n; ++i) place(xs[k](i), st.x_lower(i), st.x_upper(i));
  }
  for (int i = 0; i < n; ++i) place(xs[N](i), qp.xN_lower(i), qp.xN_upper(i));
  return qp;
}

/// Finite-horizon LQR by the textbook backward recursion; returns the
/// optimal inputs of an unconstrained problem with g = 0, q = r = 0, S = 0.
inline std::vector<Eigen::VectorXd> lqr_inputs(const DynQp& qp, double* cost = nullptr) {
  const int N = qp.horizon();
  std::vector<Eigen::MatrixXd> K(N);
  Eigen::MatrixXd P = qp.Q_N;
  for (int k = N - 1; k >= 0; --k) {
    const auto& st = qp.stages[k];
    const Eigen::MatrixXd G = st.R + st.B.transpose() * P * st.B;
    K[k] = -G.ldlt().solve(st.B.transpose() * P * st.A);
    P = st.Q + st.A.transpose() * P * (st.A + st.B * K[k]);
  }
  if (cost) *cost = 0.5 * qp.x0.dot(P * qp.x0);
  std::vector<Eigen::VectorXd> us;
  Eigen::VectorXd x = qp.x0;
  for (int k = 0; k < N; ++k) {
    us.push_back(K[k] * x);
    x = qp.stages[k].A * x + qp.stages[k].B * us.back();
  }
  return us;
}

// Exhaustive projection over every segment, written independently of the
// library: closest point by parameter clamping, ties to the larger s.
inline Projection brute_force_projection(const std::vector<Vec2>& v, const Vec2& p) {
  double best = std::numeric_limits<double>::infinity();
  Projection out;
  double s0 = 0.0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const Vec2 a = v[i], b = v[i + 1];
    const double len = (b - a).norm();
    const double t = std::clamp((p - a).dot(b - a) / (len * len), 0.0, 1.0);
    const Vec2 foot = a + t * (b - a);
    const double dist = (p - foot).norm();
    if (dist <= best) {
      best = dist;
      const double side = (b - a).x() * (p - a).y() - (b - a).y() * (p - a).x();
      out.s = s0 + t * len;
      out.d = side < 0.0 ? -dist : dist;
    }
    s0 += len;
  }
  return out;
}

}  // namespace mpcc::testing
