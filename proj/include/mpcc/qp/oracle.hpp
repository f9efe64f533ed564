#pragma once

// Reference solver for small instances, used by the tests. The dynamics are
// eliminated with a QR nullspace basis of the full equality matrix, and the
// reduced strictly convex QP is solved exactly by the Goldfarb-Idnani dual
// active-set method. Everything runs in long double with dense matrices.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mpcc/errors.hpp"
#include "mpcc/qp/ip_common.hpp"
#include "mpcc/qp/problem.hpp"

namespace mpcc::qp {

inline constexpr int kOracleMaxSize = 500;

namespace detail {

using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

struct GiResult {
  LVec y;
  std::vector<int> active;
  std::vector<long double> multipliers;
  bool feasible = true;
  int iterations = 0;
};

/// min 1/2 y'Gy + a'y  s.t.  C.col(i)' y >= b(i), G positive definite.
inline GiResult goldfarb_idnani(const LMat& G, const LVec& a, const LMat& C, const LVec& b) {
  GiResult res;
  const Eigen::Index n = G.rows();
  const Eigen::Index nc = C.cols();
  Eigen::LLT<LMat> llt(G);
  const LMat Ginv = llt.solve(LMat::Identity(n, n));
  res.y = -Ginv * a;

  std::vector<int>& act = res.active;
  std::vector<long double>& lam = res.multipliers;
  std::vector<char> is_active(static_cast<std::size_t>(nc), 0);
  const long double scale = 1.0L + (b.size() ? b.cwiseAbs().maxCoeff() : 0.0L);
  const long double eps = 1e-15L * (1.0L + scale);

  for (int outer = 0; outer < 10 * static_cast<int>(nc) + 100; ++outer) {
    ++res.iterations;
    // most violated inactive constraint
    int p = -1;
    long double worst = -eps;
    for (Eigen::Index i = 0; i < nc; ++i) {
      if (is_active[i]) continue;
      const long double slack = C.col(i).dot(res.y) - b(i);
      if (slack < worst) {
        worst = slack;
        p = static_cast<int>(i);
      }
    }
    if (p < 0) return res;

    long double lam_p = 0.0L;
    for (int inner = 0; inner < 10 * static_cast<int>(nc) + 100; ++inner) {
      const Eigen::Index q = static_cast<Eigen::Index>(act.size());
      LMat Nm(n, q);
      for (Eigen::Index j = 0; j < q; ++j) Nm.col(j) = C.col(act[static_cast<std::size_t>(j)]);
      const LVec np = C.col(p);
      LVec z, r;
      if (q > 0) {
        const LMat GN = Ginv * Nm;
        const LMat M = Nm.transpose() * GN;
        r = M.ldlt().solve(GN.transpose() * np);
        z = Ginv * np - GN * r;
      } else {
        r.resize(0);
        z = Ginv * np;
      }
      // partial step: largest step keeping active multipliers nonnegative
      long double t1 = std::numeric_limits<long double>::infinity();
      int drop = -1;
      for (Eigen::Index j = 0; j < q; ++j) {
        if (r(j) > 0.0L) {
          const long double t = lam[static_cast<std::size_t>(j)] / r(j);
          if (t < t1) {
            t1 = t;
            drop = static_cast<int>(j);
          }
        }
      }
      const long double zn = z.dot(np);
      const bool zero_dir = z.cwiseAbs().maxCoeff() <= 1e-30L * (1.0L + np.cwiseAbs().maxCoeff());
      long double t2 = std::numeric_limits<long double>::infinity();
      if (!zero_dir && zn > 0.0L) t2 = -(np.dot(res.y) - b(p)) / zn;
      const long double t = std::min(t1, t2);
      if (!std::isfinite(static_cast<double>(t))) {
        res.feasible = false;
        return res;
      }
      for (Eigen::Index j = 0; j < q; ++j) lam[static_cast<std::size_t>(j)] -= t * r(j);
      lam_p += t;
      if (!zero_dir) res.y += t * z;
      if (t == t2) {
        act.push_back(p);
        lam.push_back(lam_p);
        is_active[static_cast<std::size_t>(p)] = 1;
        break;
      }
      is_active[static_cast<std::size_t>(act[static_cast<std::size_t>(drop)])] = 0;
      act.erase(act.begin() + drop);
      lam.erase(lam.begin() + drop);
    }
  }
  res.feasible = false;
  return res;
}

}  // namespace detail

template <int NX, int NU>
QpSolution<NX, NU> solve_oracle(const StructuredQp<NX, NU>& qp) {
  using detail::LMat;
  using detail::LVec;
  qp.validate();
  const auto t0 = Clock::now();
  const int N = qp.horizon(), n = qp.nx(), m = qp.nu();
  if (N * (n + m) > kOracleMaxSize) {
    throw OracleTooLargeError("oracle limited to N*(n+m) <= " + std::to_string(kOracleMaxSize) + ", got " +
                              std::to_string(N * (n + m)));
  }
  QpSolution<NX, NU> sol;
  const auto infeasible = [&] {
    sol.status = QpStatus::infeasible;
    sol.states = simulate(qp, std::vector<Eigen::Matrix<double, NU, 1>>(N, Eigen::Matrix<double, NU, 1>::Zero(m)));
    sol.inputs.assign(N, Eigen::Matrix<double, NU, 1>::Zero(m));
    sol.costates.assign(N, Eigen::Matrix<double, NX, 1>::Zero(n));
    sol.state_multipliers.assign(N + 1, Eigen::Matrix<double, NX, 1>::Zero(n));
    sol.input_multipliers.assign(N, Eigen::Matrix<double, NU, 1>::Zero(m));
    sol.solve_time = seconds_since(t0);
    return sol;
  };
  if (qp.has_contradictory_bounds()) return infeasible();

  // z = (x_1, ..., x_N, u_0, ..., u_{N-1})
  const int nz = N * (n + m);
  auto xi = [&](int k) { return (k - 1) * n; };
  auto ui = [&](int k) { return N * n + k * m; };

  LMat H = LMat::Zero(nz, nz);
  LVec h = LVec::Zero(nz);
  for (int k = 0; k < N; ++k) {
    const auto& st = qp.stages[k];
    H.block(ui(k), ui(k), m, m) += st.R.template cast<long double>();
    h.segment(ui(k), m) += st.r.template cast<long double>();
    if (k == 0) {
      h.segment(ui(0), m) += (st.S * qp.x0).template cast<long double>();
    } else {
      H.block(xi(k), xi(k), n, n) += st.Q.template cast<long double>();
      h.segment(xi(k), n) += st.q.template cast<long double>();
      H.block(ui(k), xi(k), m, n) += st.S.template cast<long double>();
      H.block(xi(k), ui(k), n, m) += st.S.transpose().template cast<long double>();
    }
  }
  H.block(xi(N), xi(N), n, n) += qp.Q_N.template cast<long double>();
  h.segment(xi(N), n) += qp.q_N.template cast<long double>();

  // dynamics rows, then pinned variables (lower == upper) as equalities
  std::vector<std::pair<int, long double>> pinned;
  LVec lo(nz), hi(nz);
  for (int k = 1; k <= N; ++k) {
    lo.segment(xi(k), n) = qp.lower(k).template cast<long double>();
    hi.segment(xi(k), n) = qp.upper(k).template cast<long double>();
  }
  for (int k = 0; k < N; ++k) {
    lo.segment(ui(k), m) = qp.stages[k].u_lower.template cast<long double>();
    hi.segment(ui(k), m) = qp.stages[k].u_upper.template cast<long double>();
  }
  for (int j = 0; j < nz; ++j) {
    if (lo(j) == hi(j)) pinned.emplace_back(j, lo(j));
  }
  const int ne = N * n + static_cast<int>(pinned.size());
  LMat E = LMat::Zero(ne, nz);
  LVec e(ne);
  for (int k = 0; k < N; ++k) {
    const auto& st = qp.stages[k];
    E.block(k * n, xi(k + 1), n, n) = LMat::Identity(n, n);
    E.block(k * n, ui(k), n, m) = -st.B.template cast<long double>();
    LVec rhs = st.g.template cast<long double>();
    if (k == 0) {
      rhs += (st.A * qp.x0).template cast<long double>();
    } else {
      E.block(k * n, xi(k), n, n) = -st.A.template cast<long double>();
    }
    e.segment(k * n, n) = rhs;
  }
  for (std::size_t i = 0; i < pinned.size(); ++i) {
    E(N * n + static_cast<int>(i), pinned[i].first) = 1.0L;
    e(N * n + static_cast<int>(i)) = pinned[i].second;
  }
  if (ne > nz) return infeasible();

  Eigen::HouseholderQR<LMat> qr(E.transpose());
  const LMat Q = qr.householderQ() * LMat::Identity(nz, nz);
  const LMat R1 = qr.matrixQR().topLeftCorner(ne, ne).template triangularView<Eigen::Upper>();
  if (R1.diagonal().cwiseAbs().minCoeff() <= 1e-18L * (1.0L + R1.cwiseAbs().maxCoeff())) return infeasible();
  const LVec w = R1.transpose().template triangularView<Eigen::Lower>().solve(e);
  const LVec zp = Q.leftCols(ne) * w;
  const LMat Z = Q.rightCols(nz - ne);

  const LMat G = Z.transpose() * H * Z;
  const LVec a = Z.transpose() * (H * zp + h);

  std::vector<std::pair<int, bool>> rows;  // (variable, is_upper)
  for (int j = 0; j < nz; ++j) {
    if (lo(j) == hi(j)) continue;
    if (std::isfinite(static_cast<double>(lo(j)))) rows.emplace_back(j, false);
    if (std::isfinite(static_cast<double>(hi(j)))) rows.emplace_back(j, true);
  }
  LMat C(nz - ne, static_cast<Eigen::Index>(rows.size()));
  LVec b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto [j, upper] = rows[i];
    const auto col = static_cast<Eigen::Index>(i);
    if (upper) {
      C.col(col) = -Z.row(j).transpose();
      b(col) = zp(j) - hi(j);
    } else {
      C.col(col) = Z.row(j).transpose();
      b(col) = lo(j) - zp(j);
    }
  }

  detail::GiResult gi;
  if (nz - ne == 0) {
    gi.y.resize(0);
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      if (b(i) > 1e-15L) gi.feasible = false;
    }
  } else {
    gi = detail::goldfarb_idnani(G, a, C, b);
  }
  if (!gi.feasible) return infeasible();

  const LVec z = nz - ne == 0 ? zp : LVec(zp + Z * gi.y);
  LVec ynet = LVec::Zero(nz);
  for (std::size_t i = 0; i < gi.active.size(); ++i) {
    const auto [j, upper] = rows[static_cast<std::size_t>(gi.active[i])];
    ynet(j) += upper ? gi.multipliers[i] : -gi.multipliers[i];
  }
  // pinned variables: multiplier from stationarity after the costates are known
  sol.states.resize(N + 1);
  sol.inputs.resize(N);
  sol.states[0] = qp.x0;
  for (int k = 1; k <= N; ++k) sol.states[k] = z.segment(xi(k), n).template cast<double>();
  for (int k = 0; k < N; ++k) sol.inputs[k] = z.segment(ui(k), m).template cast<double>();
  sol.state_multipliers.assign(N + 1, Eigen::Matrix<double, NX, 1>::Zero(n));
  sol.input_multipliers.resize(N);
  for (int k = 1; k <= N; ++k) sol.state_multipliers[k] = ynet.segment(xi(k), n).template cast<double>();
  for (int k = 0; k < N; ++k) sol.input_multipliers[k] = ynet.segment(ui(k), m).template cast<double>();

  // costates: the equality multipliers solve E' nu = -(H z + h + ynet) on the
  // range of E'; the QR factor gives them directly.
  const LVec grad = H * z + h + ynet;
  const LVec nu_all = -R1.template triangularView<Eigen::Upper>().solve(LVec(Q.leftCols(ne).transpose() * grad));
  // E rows are (x_{k+1} - A x_k - B u_k) so nu here carries the opposite sign
  // of the costate convention x_{k+1} = A x_k + B u_k + g.
  sol.costates.resize(N);
  for (int k = 0; k < N; ++k) sol.costates[k] = (-nu_all.segment(k * n, n)).template cast<double>();
  for (std::size_t i = 0; i < pinned.size(); ++i) {
    const int j = pinned[i].first;
    const long double yj = nu_all(N * n + static_cast<int>(i));
    if (j < N * n) {
      sol.state_multipliers[j / n + 1](j % n) = static_cast<double>(yj);
    } else {
      sol.input_multipliers[(j - N * n) / m]((j - N * n) % m) = static_cast<double>(yj);
    }
  }
  sol.objective = static_cast<double>(0.5L * z.dot(H * z) + h.dot(z));
  {
    const auto& st0 = qp.stages[0];
    sol.objective += 0.5 * qp.x0.dot(st0.Q * qp.x0) + st0.q.dot(qp.x0);
  }
  sol.status = QpStatus::optimal;
  sol.iterations = gi.iterations;
  sol.solve_time = seconds_since(t0);
  return sol;
}

}  // namespace mpcc::qp
