#pragma once

// Condensing backend: the dynamics are substituted into the cost, leaving a
// dense QP in the stacked inputs U = (u_0, ..., u_{N-1}). State bounds turn
// into general inequality rows. Forming and factoring the dense Hessian costs
// O(N^3) per iteration.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "mpcc/qp/ip_common.hpp"
#include "mpcc/qp/problem.hpp"

namespace mpcc::qp {

/// min 1/2 U'HU + h'U + constant  s.t.  u_lower <= U <= u_upper,
///                                       row_lower <= G U + row_offset <= row_upper.
/// Gamma and x_free reconstruct the stacked states: X = x_free + Gamma U.
struct DenseQp {
  int N = 0, nx = 0, nu = 0;
  Eigen::MatrixXd H;
  Eigen::VectorXd h;
  double constant = 0.0;
  Eigen::VectorXd u_lower, u_upper;
  Eigen::MatrixXd G;
  Eigen::VectorXd row_offset, row_lower, row_upper;
  std::vector<std::pair<int, int>> row_source;  ///< (stage, state component) of each row
  Eigen::MatrixXd Gamma;
  Eigen::VectorXd x_free;

  double objective(const Eigen::VectorXd& U) const { return 0.5 * U.dot(H * U) + h.dot(U) + constant; }
  Eigen::VectorXd states(const Eigen::VectorXd& U) const { return x_free + Gamma * U; }
};

template <int NX, int NU>
DenseQp condense(const StructuredQp<NX, NU>& qp) {
  qp.validate();
  DenseQp d;
  const int N = d.N = qp.horizon();
  const int n = d.nx = qp.nx();
  const int m = d.nu = qp.nu();
  const int nU = N * m;

  d.x_free.resize((N + 1) * n);
  d.Gamma.setZero((N + 1) * n, nU);
  d.x_free.segment(0, n) = qp.x0;
  for (int k = 0; k < N; ++k) {
    const auto& st = qp.stages[k];
    d.x_free.segment((k + 1) * n, n) = st.A * d.x_free.segment(k * n, n) + st.g;
    if (k > 0) {
      d.Gamma.block((k + 1) * n, 0, n, k * m).noalias() = st.A * d.Gamma.block(k * n, 0, n, k * m);
    }
    d.Gamma.block((k + 1) * n, k * m, n, m) = st.B;
  }

  d.H.setZero(nU, nU);
  d.h.setZero(nU);
  d.constant = 0.0;
  Eigen::MatrixXd QG;
  for (int k = 1; k <= N; ++k) {
    const Eigen::MatrixXd& Q = k == N ? Eigen::MatrixXd(qp.Q_N) : Eigen::MatrixXd(qp.stages[k].Q);
    const Eigen::VectorXd q = k == N ? Eigen::VectorXd(qp.q_N) : Eigen::VectorXd(qp.stages[k].q);
    const int cols = k * m;  // Gamma_k is zero beyond the inputs that precede x_k
    const auto Gk = d.Gamma.block(k * n, 0, n, cols);
    const Eigen::VectorXd xf = d.x_free.segment(k * n, n);
    QG.noalias() = Q * Gk;
    d.H.topLeftCorner(cols, cols).noalias() += Gk.transpose() * QG;
    d.h.head(cols).noalias() += Gk.transpose() * (Q * xf + q);
    d.constant += 0.5 * xf.dot(Q * xf) + q.dot(xf);
  }
  for (int k = 0; k < N; ++k) {
    const auto& st = qp.stages[k];
    d.H.block(k * m, k * m, m, m) += st.R;
    const Eigen::VectorXd xf = d.x_free.segment(k * n, n);
    d.h.segment(k * m, m) += st.r + st.S * xf;
    if (k > 0) {
      // u_k' S_k x_k with x_k = x_free_k + Gamma_k U
      const Eigen::MatrixXd SG = st.S * d.Gamma.block(k * n, 0, n, k * m);
      d.H.block(k * m, 0, m, k * m) += SG;
      d.H.block(0, k * m, k * m, m) += SG.transpose();
    }
    if (k == 0) d.constant += 0.5 * qp.x0.dot(st.Q * qp.x0) + st.q.dot(qp.x0);
  }
  d.H = 0.5 * (d.H + d.H.transpose()).eval();

  d.u_lower.resize(nU);
  d.u_upper.resize(nU);
  for (int k = 0; k < N; ++k) {
    d.u_lower.segment(k * m, m) = qp.stages[k].u_lower;
    d.u_upper.segment(k * m, m) = qp.stages[k].u_upper;
  }

  for (int k = 1; k <= N; ++k) {
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(qp.lower(k)(i)) || std::isfinite(qp.upper(k)(i))) d.row_source.emplace_back(k, i);
    }
  }
  const int rows = static_cast<int>(d.row_source.size());
  d.G.setZero(rows, nU);
  d.row_offset.resize(rows);
  d.row_lower.resize(rows);
  d.row_upper.resize(rows);
  for (int r = 0; r < rows; ++r) {
    const auto [k, i] = d.row_source[static_cast<std::size_t>(r)];
    d.G.row(r) = d.Gamma.row(k * n + i);
    d.row_offset(r) = d.x_free(k * n + i);
    d.row_lower(r) = qp.lower(k)(i);
    d.row_upper(r) = qp.upper(k)(i);
  }
  return d;
}

/// Primal-dual interior-point solver for a condensed QP.
class DenseIpSolver {
 public:
  struct Result {
    Eigen::VectorXd U;
    Eigen::VectorXd box_multipliers;  ///< net, upper minus lower
    Eigen::VectorXd row_multipliers;  ///< net, upper minus lower
    QpStatus status = QpStatus::max_iter;
    int iterations = 0;
    double objective = 0.0;
    std::vector<double> merit_history;
  };

  explicit DenseIpSolver(IpSettings settings = {}) : settings_(settings) {}

  Result solve(const DenseQp& d, const Eigen::VectorXd* warm_start = nullptr) {
    Result out;
    const Eigen::Index nU = d.H.rows();
    if ((d.u_lower.array() > d.u_upper.array()).any() || (d.row_lower.array() > d.row_upper.array()).any()) {
      out.status = QpStatus::infeasible;
      out.U.setZero(nU);
      out.box_multipliers.setZero(nU);
      out.row_multipliers.setZero(d.G.rows());
      return out;
    }

    U_ = warm_start && warm_start->size() == nU ? *warm_start : Eigen::VectorXd::Zero(nU);
    for (Eigen::Index i = 0; i < nU; ++i) {
      const double lo = d.u_lower(i), hi = d.u_upper(i);
      if (std::isfinite(lo) && std::isfinite(hi)) {
        U_(i) = std::clamp(U_(i), lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo));
      } else if (std::isfinite(lo)) {
        U_(i) = std::max(U_(i), lo + 1e-2 * std::max(1.0, std::abs(lo)));
      } else if (std::isfinite(hi)) {
        U_(i) = std::min(U_(i), hi - 1e-2 * std::max(1.0, std::abs(hi)));
      }
    }
    box_.assign(d.u_lower, d.u_upper);
    rows_.assign(d.row_lower, d.row_upper);
    row_val_ = d.G * U_ + d.row_offset;
    box_.initialize(U_, settings_.initial_mu);
    rows_.initialize(row_val_, settings_.initial_mu);
    const int total = box_.active_count() + rows_.active_count();

    double primal = 0.0;
    double last[4] = {0.0, 0.0, 0.0, 0.0};  // primal, dual, mu, objective
    double last_scale = 1.0;
    int it = 0;
    for (;; ++it) {
      row_val_.noalias() = d.G * U_;
      row_val_ += d.row_offset;
      grad_.noalias() = d.H * U_;
      const double scale = std::max({1.0, d.h.size() ? d.h.cwiseAbs().maxCoeff() : 0.0,
                                     grad_.size() ? grad_.cwiseAbs().maxCoeff() : 0.0});
      grad_ += d.h;
      const double fval = 0.5 * U_.dot(grad_ + d.h) + d.constant;
      const double res_primal = std::max(box_.residuals(U_), rows_.residuals(row_val_));
      stat_ = grad_ + box_.net_multiplier();
      stat_.noalias() += d.G.transpose() * rows_.net_multiplier();
      const double dual = stat_.size() ? stat_.cwiseAbs().maxCoeff() : 0.0;
      const double comp = box_.complementarity_sum() + rows_.complementarity_sum();
      const double mu = total > 0 ? comp / total : 0.0;
      const double linear = stat_.cwiseAbs().sum() + box_.residual_l1() + rows_.residual_l1();
      const double merit = linear + comp;
      if (it > 0 && !(merit < out.merit_history.back())) {
        U_ = saved_U_;
        box_.set_iterate(saved_box_);
        rows_.set_iterate(saved_rows_);
        if (ip_converged(settings_, true, last[0], last[1], last[2], last_scale, last[3])) {
          out.status = QpStatus::optimal;
        }
        break;
      }
      primal = res_primal;
      out.merit_history.push_back(merit);

      if (ip_converged(settings_, false, primal, dual, mu, scale, fval)) {
        out.status = QpStatus::optimal;
        break;
      }
      if (!std::isfinite(merit) || mu > 1e30 ||
          std::max(box_.max_multiplier(), rows_.max_multiplier()) > 1e25 * scale) {
        out.status = QpStatus::infeasible;
        break;
      }
      if (it >= settings_.max_iter) break;
      saved_U_ = U_;
      saved_box_ = box_.iterate();
      saved_rows_ = rows_.iterate();
      last[0] = primal, last[1] = dual, last[2] = mu, last[3] = fval;
      last_scale = scale;

      // reduced Newton matrix H + Sigma_box + G' Sigma_rows G
      M_ = d.H;
      sig_box_.setZero(nU);
      box_.add_sigma(sig_box_);
      M_.diagonal() += sig_box_;
      sig_rows_.setZero(d.G.rows());
      rows_.add_sigma(sig_rows_);
      Gs_ = sig_rows_.cwiseSqrt().asDiagonal() * d.G;
      M_.selfadjointView<Eigen::Lower>().rankUpdate(Gs_.transpose());
      llt_.compute(M_);

      auto newton = [&](double sigma_mu, bool corrector) {
        rhs_ = grad_;
        box_.add_rhs(rhs_, sigma_mu, corrector);
        rrow_.setZero(d.G.rows());
        rows_.add_rhs(rrow_, sigma_mu, corrector);
        rhs_.noalias() += d.G.transpose() * rrow_;
        dU_ = -llt_.solve(rhs_);
        // iterative refinement against the unassembled operator
        for (int pass = 0; pass < 3; ++pass) {
          drow_.noalias() = d.G * dU_;
          ref_.noalias() = d.H * dU_;
          ref_ += sig_box_.cwiseProduct(dU_) + rhs_;
          ref_.noalias() += d.G.transpose() * sig_rows_.cwiseProduct(drow_);
          if (ref_.cwiseAbs().maxCoeff() <= 1e-15 * std::max(1.0, rhs_.cwiseAbs().maxCoeff())) break;
          dU_ -= llt_.solve(ref_);
        }
        drow_.noalias() = d.G * dU_;
        box_.recover(dU_, sigma_mu, corrector);
        rows_.recover(drow_, sigma_mu, corrector);
        // and once against the unreduced stationarity, which the multiplier
        // recovery perturbs once the barrier curvature is large
        ref_ = grad_ + box_.net_after_step();
        ref_.noalias() += d.H * dU_;
        ref_.noalias() += d.G.transpose() * rows_.net_after_step();
        corr_ = -llt_.solve(ref_);
        drow_.noalias() = d.G * corr_;
        box_.refine(corr_);
        rows_.refine(drow_);
        dU_ += corr_;
      };

      newton(0.0, false);
      if (total > 0) {
        const double a_aff = std::min(box_.max_step(), rows_.max_step());
        const double mu_aff = (box_.complementarity_after(a_aff) + rows_.complementarity_after(a_aff)) / total;
        const double ratio = mu > 0.0 ? mu_aff / mu : 0.0;
        const double sigma_mu = ratio * ratio * ratio * mu;
        box_.store_affine();
        rows_.store_affine();
        newton(sigma_mu, true);
      }
      auto backtrack = [&](int max_halvings) {
        double a = total > 0 ? std::min(1.0, settings_.step_fraction * std::min(box_.max_step(), rows_.max_step()))
                             : 1.0;
        if (total == 0 || !settings_.monotone_merit) return a;
        for (int tries = 0; tries < max_halvings; ++tries) {
          if ((1.0 - a) * linear + box_.complementarity_after(a) + rows_.complementarity_after(a) < merit) return a;
          a *= 0.5;
        }
        return -1.0;
      };
      double alpha = backtrack(8);
      if (alpha < 0.0) {
        newton(0.1 * mu, false);
        alpha = std::max(backtrack(60), 0.0);
      }
      U_ += alpha * dU_;
      box_.update(alpha);
      rows_.update(alpha);
    }
    if (out.status == QpStatus::max_iter && primal > 1e-6) out.status = QpStatus::infeasible;
    out.U = U_;
    out.box_multipliers = box_.net_multiplier();
    out.row_multipliers = rows_.net_multiplier();
    if (out.status == QpStatus::optimal) polish(d, out);
    out.iterations = it;
    out.objective = d.objective(U_);
    return out;
  }

 private:
  // Solves the equality-constrained QP on the active set guessed from the
  // interior-point iterate and keeps it when it is primal and dual feasible.
  void polish(const DenseQp& d, Result& out) const {
    const Eigen::Index nU = d.H.rows();
    std::vector<std::pair<Eigen::Index, int>> act_box, act_rows;
    for (Eigen::Index i = 0; i < nU; ++i)
      if (const int a = box_.activity(i)) act_box.emplace_back(i, a);
    for (Eigen::Index r = 0; r < d.G.rows(); ++r)
      if (const int a = rows_.activity(r)) act_rows.emplace_back(r, a);
    const auto na = static_cast<Eigen::Index>(act_box.size() + act_rows.size());
    if (na > nU) return;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nU + na, nU + na);
    Eigen::VectorXd rhs(nU + na);
    K.topLeftCorner(nU, nU) = d.H;
    rhs.head(nU) = -d.h;
    Eigen::Index row = nU;
    for (const auto& [i, a] : act_box) {
      K(row, i) = K(i, row) = 1.0;
      rhs(row++) = a < 0 ? box_.lower_bound(i) : box_.upper_bound(i);
    }
    for (const auto& [r, a] : act_rows) {
      K.block(row, 0, 1, nU) = d.G.row(r);
      K.block(0, row, nU, 1) = d.G.row(r).transpose();
      rhs(row++) = (a < 0 ? rows_.lower_bound(r) : rows_.upper_bound(r)) - d.row_offset(r);
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (!sol.allFinite() || (K * sol - rhs).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff())) {
      return;
    }
    const Eigen::VectorXd U = sol.head(nU);
    const Eigen::VectorXd rv = d.G * U + d.row_offset;
    const double ptol = 1e-10 * std::max(1.0, U.cwiseAbs().maxCoeff());
    if ((U - d.u_upper).maxCoeff() > ptol || (d.u_lower - U).maxCoeff() > ptol) return;
    if (rv.size() && ((rv - d.row_upper).maxCoeff() > ptol || (d.row_lower - rv).maxCoeff() > ptol)) return;
    const double dtol = 1e-9 * std::max(1.0, d.h.cwiseAbs().maxCoeff());
    Eigen::VectorXd ybox = Eigen::VectorXd::Zero(nU), yrow = Eigen::VectorXd::Zero(d.G.rows());
    row = nU;
    for (const auto& [i, a] : act_box) {
      const double y = sol(row++);
      if (a * y < -dtol) return;
      ybox(i) = y;
    }
    for (const auto& [r, a] : act_rows) {
      const double y = sol(row++);
      if (a * y < -dtol) return;
      yrow(r) = y;
    }
    out.U = U;
    out.box_multipliers = ybox;
    out.row_multipliers = yrow;
  }

  IpSettings settings_;
  BoundBlock box_, rows_;
  BoundBlock::Iterate saved_box_, saved_rows_;
  Eigen::VectorXd saved_U_;
  Eigen::VectorXd U_, dU_, grad_, stat_, rhs_, rrow_, row_val_, drow_, sig_rows_, sig_box_, ref_, corr_;
  Eigen::MatrixXd M_, Gs_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Expands a dense result into a structured solution: states by forward
/// substitution, bound multipliers mapped back to their stages. Costates are
/// left empty; recover_costates fills them when the structured QP is at hand.
template <int NX, int NU>
QpSolution<NX, NU> expand_dense(const DenseQp& d, const DenseIpSolver::Result& r) {
  QpSolution<NX, NU> sol;
  const Eigen::VectorXd X = d.states(r.U);
  sol.states.resize(static_cast<std::size_t>(d.N + 1));
  sol.inputs.resize(static_cast<std::size_t>(d.N));
  sol.state_multipliers.assign(static_cast<std::size_t>(d.N + 1), Eigen::Matrix<double, NX, 1>::Zero(d.nx));
  sol.input_multipliers.resize(static_cast<std::size_t>(d.N));
  for (int k = 0; k <= d.N; ++k) sol.states[k] = X.segment(k * d.nx, d.nx);
  for (int k = 0; k < d.N; ++k) {
    sol.inputs[k] = r.U.segment(k * d.nu, d.nu);
    sol.input_multipliers[k] = r.box_multipliers.segment(k * d.nu, d.nu);
  }
  for (std::size_t row = 0; row < d.row_source.size(); ++row) {
    const auto [k, i] = d.row_source[row];
    sol.state_multipliers[k](i) = r.row_multipliers(static_cast<Eigen::Index>(row));
  }
  sol.status = r.status;
  sol.iterations = r.iterations;
  sol.objective = r.objective;
  sol.merit_history = r.merit_history;
  return sol;
}

/// Solves a condensed QP and returns its structured solution without costates.
template <int NX, int NU>
QpSolution<NX, NU> solve_dense(const DenseQp& d, const IpSettings& settings = {}) {
  const auto t0 = Clock::now();
  DenseIpSolver solver(settings);
  auto sol = expand_dense<NX, NU>(d, solver.solve(d));
  sol.solve_time = seconds_since(t0);
  return sol;
}

/// condense + dense interior point, with solve_time covering both.
template <int NX, int NU>
class CondensedSolver {
 public:
  using Solution = QpSolution<NX, NU>;
  using InputVec = Eigen::Matrix<double, NU, 1>;

  explicit CondensedSolver(IpSettings settings = {}) : dense_(settings) {}

  Solution solve(const StructuredQp<NX, NU>& qp, const std::vector<InputVec>* warm_inputs = nullptr) {
    const auto t0 = Clock::now();
    const DenseQp d = condense(qp);
    const double setup = seconds_since(t0);
    Eigen::VectorXd warm;
    if (warm_inputs && static_cast<int>(warm_inputs->size()) >= d.N) {
      warm.resize(d.N * d.nu);
      for (int k = 0; k < d.N; ++k) warm.segment(k * d.nu, d.nu) = (*warm_inputs)[k];
    }
    auto sol = expand_dense<NX, NU>(d, dense_.solve(d, warm.size() ? &warm : nullptr));
    sol.objective = objective(qp, sol.states, sol.inputs);
    recover_costates(qp, sol);
    sol.setup_time = setup;
    sol.solve_time = seconds_since(t0);
    return sol;
  }

 private:
  DenseIpSolver dense_;
};

}  // namespace mpcc::qp
