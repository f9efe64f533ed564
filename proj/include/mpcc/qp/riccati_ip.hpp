#pragma once

// Structure-exploiting primal-dual interior-point solver.
//
// Each iteration eliminates slacks and bound multipliers, which leaves an
// equality-constrained LQ problem with the barrier curvature added to the
// diagonal of Q and R. That problem is solved by a Riccati recursion, so the
// work per iteration is O(N (nx + nu)^3). Mehrotra predictor-corrector steps
// reuse one factorization for both solves.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mpcc/qp/ip_common.hpp"
#include "mpcc/qp/problem.hpp"

namespace mpcc::qp {

namespace detail {

/// Unblocked Cholesky factorization for the small input-sized blocks; the
/// loops unroll for compile-time sizes.
template <int M>
class SmallLlt {
 public:
  using Mat = Eigen::Matrix<double, M, M>;

  /// False if a is not numerically positive definite.
  bool compute(const Mat& a) {
    const Eigen::Index n = a.rows();
    L_.setZero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double d = a(j, j);
      for (Eigen::Index k = 0; k < j; ++k) d -= L_(j, k) * L_(j, k);
      if (!(d > 0.0)) return false;
      const double ljj = std::sqrt(d);
      L_(j, j) = ljj;
      for (Eigen::Index i = j + 1; i < n; ++i) {
        double v = a(i, j);
        for (Eigen::Index k = 0; k < j; ++k) v -= L_(i, k) * L_(j, k);
        L_(i, j) = v / ljj;
      }
    }
    return true;
  }

  /// Overwrites b with a^{-1} b.
  template <class Derived>
  void solve_in_place(Eigen::MatrixBase<Derived>& b) const {
    const Eigen::Index n = L_.rows();
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double v = b(i, c);
        for (Eigen::Index k = 0; k < i; ++k) v -= L_(i, k) * b(k, c);
        b(i, c) = v / L_(i, i);
      }
      for (Eigen::Index i = n - 1; i >= 0; --i) {
        double v = b(i, c);
        for (Eigen::Index k = i + 1; k < n; ++k) v -= L_(k, i) * b(k, c);
        b(i, c) = v / L_(i, i);
      }
    }
  }

 private:
  Mat L_;
};

}  // namespace detail

template <int NX, int NU>
class RiccatiIpSolver {
 public:
  using Qp = StructuredQp<NX, NU>;
  using Solution = QpSolution<NX, NU>;
  using StateVec = Eigen::Matrix<double, NX, 1>;
  using InputVec = Eigen::Matrix<double, NU, 1>;
  using StateMat = Eigen::Matrix<double, NX, NX>;
  using CrossMat = Eigen::Matrix<double, NU, NX>;
  using InputMat = Eigen::Matrix<double, NU, NU>;
  using XBlock = BoundBlockT<NX>;
  using UBlock = BoundBlockT<NU>;

  explicit RiccatiIpSolver(IpSettings settings = {}) : settings_(settings) {}

  const IpSettings& settings() const { return settings_; }

  /// Solves qp. `warm_inputs`, when given, seeds the primal iterate.
  Solution solve(const Qp& qp, const std::vector<InputVec>* warm_inputs = nullptr) {
    const auto t0 = Clock::now();
    qp.validate();
    resize(qp);
    Solution sol;
    const int N = N_;

    if (qp.has_contradictory_bounds()) {
      sol.status = QpStatus::infeasible;
      sol.states.assign(static_cast<std::size_t>(N + 1), qp.x0);
      sol.inputs.assign(static_cast<std::size_t>(N), InputVec::Zero(nu_));
      sol.solve_time = seconds_since(t0);
      return sol;
    }

    initialize(qp, warm_inputs);

    int total_bounds = 0;
    for (int k = 1; k <= N; ++k) total_bounds += xb_[k].active_count();
    for (int k = 0; k < N; ++k) total_bounds += ub_[k].active_count();

    sol.status = QpStatus::max_iter;
    double primal_res = 0.0;
    Residuals last;
    double last_mu = 0.0;
    int it = 0;
    for (;; ++it) {
      const Residuals res = evaluate(qp);
      const double mu = total_bounds > 0 ? res.comp_sum / total_bounds : 0.0;
      const double merit = res.linear_l1 + res.comp_sum;
      if (it > 0 && !(merit < sol.merit_history.back())) {
        // round-off floor: fall back to the previous iterate
        restore();
        primal_res = last.primal;
        if (ip_converged(settings_, true, last.primal, last.dual, last_mu, last.grad_scale, last.objective)) {
          sol.status = QpStatus::optimal;
        }
        break;
      }
      primal_res = res.primal;
      sol.merit_history.push_back(merit);

      if (ip_converged(settings_, false, res.primal, res.dual, mu, res.grad_scale, res.objective)) {
        sol.status = QpStatus::optimal;
        break;
      }
      if (!std::isfinite(merit) || mu > 1e30 || max_multiplier() > 1e25 * std::max(1.0, res.grad_scale)) {
        sol.status = QpStatus::infeasible;
        break;
      }
      if (it >= settings_.max_iter) break;

      save();
      last = res;
      last_mu = mu;
      factor(qp);

      // predictor
      build_rhs(0.0, false);
      solve_vectors(qp);
      recover_bounds(0.0, false);
      double alpha_aff = max_step();
      double comp_aff = complementarity_after(alpha_aff);
      double sigma_mu = 0.0;
      if (total_bounds > 0) {
        const double mu_aff = comp_aff / total_bounds;
        const double ratio = mu > 0.0 ? mu_aff / mu : 0.0;
        sigma_mu = ratio * ratio * ratio * mu;
        for (int k = 1; k <= N; ++k) xb_[k].store_affine();
        for (int k = 0; k < N; ++k) ub_[k].store_affine();

        // corrector
        build_rhs(sigma_mu, true);
        solve_vectors(qp);
        recover_bounds(sigma_mu, true);
        refine(qp);
      }

      auto backtrack = [&](int max_halvings) {
        double a = std::min(1.0, settings_.step_fraction * max_step());
        if (total_bounds == 0 || !settings_.monotone_merit) return a;
        for (int tries = 0; tries < max_halvings; ++tries) {
          if ((1.0 - a) * res.linear_l1 + complementarity_after(a) < merit) return a;
          a *= 0.5;
        }
        return -1.0;
      };
      double alpha = backtrack(8);
      if (alpha < 0.0) {
        // The corrector is not guaranteed to descend; a plain centering step is.
        build_rhs(0.1 * mu, false);
        solve_vectors(qp);
        recover_bounds(0.1 * mu, false);
        refine(qp);
        alpha = std::max(backtrack(60), 0.0);
      }
      apply_step(alpha);
    }

    if (sol.status == QpStatus::max_iter && primal_res > 1e-6) sol.status = QpStatus::infeasible;

    sol.iterations = it;
    sol.states.assign(x_.begin(), x_.end());
    sol.inputs.assign(u_.begin(), u_.end());
    sol.costates.assign(nu_vec_.begin(), nu_vec_.end());
    sol.state_multipliers.assign(static_cast<std::size_t>(N + 1), StateVec::Zero(nx_));
    sol.input_multipliers.resize(static_cast<std::size_t>(N));
    for (int k = 1; k <= N; ++k) sol.state_multipliers[k] = xb_[k].net_multiplier();
    for (int k = 0; k < N; ++k) sol.input_multipliers[k] = ub_[k].net_multiplier();
    sol.objective = objective(qp, sol.states, sol.inputs);
    sol.solve_time = seconds_since(t0);
    return sol;
  }

 private:
  struct Residuals {
    double primal = 0.0;
    double dual = 0.0;
    double linear_l1 = 0.0;
    double comp_sum = 0.0;
    double grad_scale = 0.0;
    double objective = 0.0;
  };

  void resize(const Qp& qp) {
    const int N = qp.horizon();
    const int nx = qp.nx();
    const int nu = qp.nu();
    if (N == N_ && nx == nx_ && nu == nu_) return;
    N_ = N;
    nx_ = nx;
    nu_ = nu;
    const auto n1 = static_cast<std::size_t>(N + 1);
    const auto n0 = static_cast<std::size_t>(N);
    x_.assign(n1, StateVec::Zero(nx));
    dx_.assign(n1, StateVec::Zero(nx));
    gx_.assign(n1, StateVec::Zero(nx));
    sx_.assign(n1, StateVec::Zero(nx));
    P_.assign(n1, StateMat::Zero(nx, nx));
    p_.assign(n1, StateVec::Zero(nx));
    u_.assign(n0, InputVec::Zero(nu));
    du_.assign(n0, InputVec::Zero(nu));
    gu_.assign(n0, InputVec::Zero(nu));
    su_.assign(n0, InputVec::Zero(nu));
    kff_.assign(n0, InputVec::Zero(nu));
    K_.assign(n0, CrossMat::Zero(nu, nx));
    Qux_.assign(n0, CrossMat::Zero(nu, nx));
    llt_.assign(n0, detail::SmallLlt<NU>());
    rdyn_.assign(n0, StateVec::Zero(nx));
    nu_vec_.assign(n0, StateVec::Zero(nx));
    nu_new_.assign(n0, StateVec::Zero(nx));
    ref_dx_ = dx_;
    ref_du_ = du_;
    ref_nu_ = nu_new_;
    ref_rdyn_ = rdyn_;
    xb_.assign(n1, XBlock());
    ub_.assign(n0, UBlock());
    saved_xb_.assign(n1, typename XBlock::Iterate());
    saved_ub_.assign(n0, typename UBlock::Iterate());
  }

  void initialize(const Qp& qp, const std::vector<InputVec>* warm_inputs) {
    const int N = N_;
    for (int k = 0; k < N; ++k) {
      const auto& st = qp.stages[k];
      InputVec u = (warm_inputs && static_cast<int>(warm_inputs->size()) > k) ? (*warm_inputs)[k]
                                                                              : InputVec::Zero(nu_);
      for (int i = 0; i < nu_; ++i) {
        const double lo = st.u_lower(i), hi = st.u_upper(i);
        if (std::isfinite(lo) && std::isfinite(hi)) {
          const double margin = 0.05 * (hi - lo);
          u(i) = std::clamp(u(i), lo + margin, hi - margin);
        } else if (std::isfinite(lo)) {
          u(i) = std::max(u(i), lo + 1e-2 * std::max(1.0, std::abs(lo)));
        } else if (std::isfinite(hi)) {
          u(i) = std::min(u(i), hi - 1e-2 * std::max(1.0, std::abs(hi)));
        }
      }
      u_[k] = u;
    }
    x_[0] = qp.x0;
    for (int k = 0; k < N; ++k) {
      const auto& st = qp.stages[k];
      x_[k + 1] = st.A * x_[k] + st.B * u_[k] + st.g;
    }
    for (int k = 1; k <= N; ++k) {
      xb_[k].assign(qp.lower(k), qp.upper(k));
      xb_[k].initialize(x_[k], settings_.initial_mu);
    }
    for (int k = 0; k < N; ++k) {
      ub_[k].assign(qp.stages[k].u_lower, qp.stages[k].u_upper);
      ub_[k].initialize(u_[k], settings_.initial_mu);
    }
    for (auto& v : nu_vec_) v.setZero();
  }

  Residuals evaluate(const Qp& qp) {
    const int N = N_;
    Residuals res;
    for (int k = 0; k < N; ++k) {
      const auto& st = qp.stages[k];
      rdyn_[k] = st.A * x_[k] + st.B * u_[k] + st.g - x_[k + 1];
      res.primal = std::max(res.primal, rdyn_[k].cwiseAbs().maxCoeff());
      res.linear_l1 += rdyn_[k].cwiseAbs().sum();
      gu_[k] = st.R * u_[k] + st.S * x_[k] + st.r;
      res.objective += 0.5 * u_[k].dot(st.R * u_[k]) + u_[k].dot(st.S * x_[k]) + st.r.dot(u_[k]) +
                       0.5 * x_[k].dot(st.Q * x_[k]) + st.q.dot(x_[k]);
      if (k > 0) gx_[k] = st.Q * x_[k] + st.S.transpose() * u_[k] + st.q;
    }
    gx_[N] = qp.Q_N * x_[N] + qp.q_N;
    res.objective += 0.5 * x_[N].dot(qp.Q_N * x_[N]) + qp.q_N.dot(x_[N]);

    for (int k = 0; k < N; ++k) {
      res.grad_scale = std::max(res.grad_scale, gu_[k].cwiseAbs().maxCoeff());
      const double r = ub_[k].residuals(u_[k]);
      res.primal = std::max(res.primal, r);
      res.linear_l1 += ub_[k].residual_l1();
      res.comp_sum += ub_[k].complementarity_sum();
      const InputVec stat = gu_[k] + qp.stages[k].B.transpose() * nu_vec_[k] + ub_[k].net_multiplier();
      res.dual = std::max(res.dual, stat.cwiseAbs().maxCoeff());
      res.linear_l1 += stat.cwiseAbs().sum();
    }
    for (int k = 1; k <= N; ++k) {
      res.grad_scale = std::max(res.grad_scale, gx_[k].cwiseAbs().maxCoeff());
      const double r = xb_[k].residuals(x_[k]);
      res.primal = std::max(res.primal, r);
      res.linear_l1 += xb_[k].residual_l1();
      res.comp_sum += xb_[k].complementarity_sum();
      StateVec stat = gx_[k] - nu_vec_[k - 1] + xb_[k].net_multiplier();
      if (k < N) stat += qp.stages[k].A.transpose() * nu_vec_[k];
      res.dual = std::max(res.dual, stat.cwiseAbs().maxCoeff());
      res.linear_l1 += stat.cwiseAbs().sum();
    }
    return res;
  }

  // Backward Riccati factorization with barrier curvature on the diagonals.
  void factor(const Qp& qp) {
    const int N = N_;
    for (int k = 1; k <= N; ++k) {
      sx_[k].setZero();
      xb_[k].add_sigma(sx_[k]);
    }
    for (int k = 0; k < N; ++k) {
      su_[k].setZero();
      ub_[k].add_sigma(su_[k]);
    }
    P_[N] = qp.Q_N;
    P_[N].diagonal() += sx_[N];
    for (int k = N - 1; k >= 0; --k) {
      const auto& st = qp.stages[k];
      const CrossMat BtP = st.B.transpose() * P_[k + 1];
      InputMat Quu = st.R + BtP * st.B;
      Quu.diagonal() += su_[k];
      Qux_[k] = st.S + BtP * st.A;
      llt_[k].compute(Quu);
      K_[k] = -Qux_[k];
      llt_[k].solve_in_place(K_[k]);
      if (k > 0) {
        StateMat Pk = st.Q + st.A.transpose() * P_[k + 1] * st.A + Qux_[k].transpose() * K_[k];
        Pk.diagonal() += sx_[k];
        P_[k] = 0.5 * (Pk + Pk.transpose());
      }
    }
  }

  void build_rhs(double sigma_mu, bool corrector) {
    const int N = N_;
    for (int k = 1; k <= N; ++k) {
      sx_[k] = gx_[k];
      xb_[k].add_rhs(sx_[k], sigma_mu, corrector);
    }
    for (int k = 0; k < N; ++k) {
      su_[k] = gu_[k];
      ub_[k].add_rhs(su_[k], sigma_mu, corrector);
    }
  }

  // Vector part of the recursion plus the forward rollout. sx_/su_ hold the
  // linear terms on entry.
  void solve_vectors(const Qp& qp) {
    const int N = N_;
    p_[N] = sx_[N];
    for (int k = N - 1; k >= 0; --k) {
      const auto& st = qp.stages[k];
      const StateVec f = p_[k + 1] + P_[k + 1] * rdyn_[k];
      kff_[k] = -(su_[k] + st.B.transpose() * f);
      llt_[k].solve_in_place(kff_[k]);
      if (k > 0) p_[k] = sx_[k] + st.A.transpose() * f + Qux_[k].transpose() * kff_[k];
    }
    dx_[0].setZero();
    for (int k = 0; k < N; ++k) {
      const auto& st = qp.stages[k];
      du_[k] = K_[k] * dx_[k] + kff_[k];
      dx_[k + 1] = st.A * dx_[k] + st.B * du_[k] + rdyn_[k];
      nu_new_[k] = P_[k + 1] * dx_[k + 1] + p_[k + 1];
    }
  }

  void recover_bounds(double sigma_mu, bool corrector) {
    for (int k = 1; k <= N_; ++k) {
      xb_[k].recover(dx_[k], sigma_mu, corrector);
    }
    for (int k = 0; k < N_; ++k) {
      ub_[k].recover(du_[k], sigma_mu, corrector);
    }
  }

  // One pass of iterative refinement on the unreduced Newton system. Once
  // the barrier curvature is large, costates from P dx + p carry errors of
  // order eps |P| |dx| that would otherwise pile up in the stationarity
  // residual.
  void refine(const Qp& qp) {
    const int N = N_;
    for (int k = 0; k < N; ++k) {
      const auto& st = qp.stages[k];
      su_[k] = gu_[k] + st.R * du_[k] + st.S * dx_[k] + st.B.transpose() * nu_new_[k] + ub_[k].net_after_step();
    }
    for (int k = 1; k <= N; ++k) {
      if (k < N) {
        const auto& st = qp.stages[k];
        sx_[k] = gx_[k] + st.Q * dx_[k] + st.S.transpose() * du_[k] + st.A.transpose() * nu_new_[k];
      } else {
        sx_[k] = gx_[k] + qp.Q_N * dx_[k];
      }
      sx_[k] += xb_[k].net_after_step() - nu_new_[k - 1];
    }
    // the correction solves the same system with exact dynamics
    std::swap(dx_, ref_dx_);
    std::swap(du_, ref_du_);
    std::swap(nu_new_, ref_nu_);
    std::swap(rdyn_, ref_rdyn_);
    for (auto& r : rdyn_) r.setZero();
    solve_vectors(qp);
    std::swap(rdyn_, ref_rdyn_);
    for (int k = 1; k <= N; ++k) {
      xb_[k].refine(dx_[k]);
      dx_[k] += ref_dx_[k];
    }
    for (int k = 0; k < N; ++k) {
      ub_[k].refine(du_[k]);
      du_[k] += ref_du_[k];
      nu_new_[k] += ref_nu_[k];
    }
  }

  double max_step() const {
    double a = 1.0;
    for (int k = 1; k <= N_; ++k) a = std::min(a, xb_[k].max_step());
    for (int k = 0; k < N_; ++k) a = std::min(a, ub_[k].max_step());
    return a;
  }

  double complementarity_after(double alpha) const {
    double c = 0.0;
    for (int k = 1; k <= N_; ++k) c += xb_[k].complementarity_after(alpha);
    for (int k = 0; k < N_; ++k) c += ub_[k].complementarity_after(alpha);
    return c;
  }

  double max_multiplier() const {
    double m = 0.0;
    for (int k = 1; k <= N_; ++k) m = std::max(m, xb_[k].max_multiplier());
    for (int k = 0; k < N_; ++k) m = std::max(m, ub_[k].max_multiplier());
    return m;
  }

  void save() {
    saved_x_ = x_;
    saved_u_ = u_;
    saved_nu_ = nu_vec_;
    for (int k = 1; k <= N_; ++k) saved_xb_[k] = xb_[k].iterate();
    for (int k = 0; k < N_; ++k) saved_ub_[k] = ub_[k].iterate();
  }

  void restore() {
    x_ = saved_x_;
    u_ = saved_u_;
    nu_vec_ = saved_nu_;
    for (int k = 1; k <= N_; ++k) xb_[k].set_iterate(saved_xb_[k]);
    for (int k = 0; k < N_; ++k) ub_[k].set_iterate(saved_ub_[k]);
  }

  void apply_step(double alpha) {
    for (int k = 1; k <= N_; ++k) {
      x_[k] += alpha * dx_[k];
      xb_[k].update(alpha);
    }
    for (int k = 0; k < N_; ++k) {
      u_[k] += alpha * du_[k];
      nu_vec_[k] += alpha * (nu_new_[k] - nu_vec_[k]);
      ub_[k].update(alpha);
    }
  }

  IpSettings settings_;
  int N_ = -1, nx_ = -1, nu_ = -1;
  std::vector<StateVec> x_, dx_, gx_, sx_, p_, rdyn_, nu_vec_, nu_new_;
  std::vector<InputVec> u_, du_, gu_, su_, kff_;
  std::vector<StateMat> P_;
  std::vector<CrossMat> K_, Qux_;
  std::vector<detail::SmallLlt<NU>> llt_;
  std::vector<XBlock> xb_;
  std::vector<UBlock> ub_;
  std::vector<StateVec> ref_dx_, ref_nu_, ref_rdyn_;
  std::vector<InputVec> ref_du_;
  std::vector<StateVec> saved_x_, saved_nu_;
  std::vector<InputVec> saved_u_;
  std::vector<typename XBlock::Iterate> saved_xb_;
  std::vector<typename UBlock::Iterate> saved_ub_;
};

}  // namespace mpcc::qp
