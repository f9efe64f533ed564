#pragma once

// Stage-structured convex QP
//
//   min  sum_k  1/2 x_k'Q_k x_k + 1/2 u_k'R_k u_k + u_k'S_k x_k + q_k'x_k + r_k'u_k
//        + 1/2 x_N'Q_N x_N + q_N'x_N
//   s.t. x_0 given,  x_{k+1} = A_k x_k + B_k u_k + g_k,
//        box bounds on x_1..x_N and u_0..u_{N-1}.
//
// Bounds stored on stage 0 are not enforced: x_0 is data. Absent bounds are
// +-infinity. NX/NU may be Eigen::Dynamic.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mpcc/errors.hpp"

namespace mpcc::qp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

template <int NX, int NU>
struct StageLtv {
  using StateVec = Eigen::Matrix<double, NX, 1>;
  using InputVec = Eigen::Matrix<double, NU, 1>;
  using StateMat = Eigen::Matrix<double, NX, NX>;
  using InputMat = Eigen::Matrix<double, NX, NU>;
  using InputCost = Eigen::Matrix<double, NU, NU>;
  using CrossCost = Eigen::Matrix<double, NU, NX>;

  StateMat A;
  InputMat B;
  StateVec g;
  StateMat Q;
  InputCost R;
  CrossCost S;
  StateVec q;
  InputVec r;
  StateVec x_lower, x_upper;
  InputVec u_lower, u_upper;

  /// Zero dynamics and cost, unbounded.
  static StageLtv zero(int nx = NX, int nu = NU) {
    StageLtv st;
    st.A.setZero(nx, nx);
    st.B.setZero(nx, nu);
    st.g.setZero(nx);
    st.Q.setZero(nx, nx);
    st.R.setZero(nu, nu);
    st.S.setZero(nu, nx);
    st.q.setZero(nx);
    st.r.setZero(nu);
    st.x_lower.setConstant(nx, -kInf);
    st.x_upper.setConstant(nx, kInf);
    st.u_lower.setConstant(nu, -kInf);
    st.u_upper.setConstant(nu, kInf);
    return st;
  }

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
};

template <int NX, int NU>
struct StructuredQp {
  using Stage = StageLtv<NX, NU>;
  using StateVec = typename Stage::StateVec;
  using InputVec = typename Stage::InputVec;
  using StateMat = typename Stage::StateMat;

  StateVec x0;
  std::vector<Stage> stages;
  StateMat Q_N;
  StateVec q_N;
  StateVec xN_lower, xN_upper;

  int horizon() const { return static_cast<int>(stages.size()); }
  int nx() const { return static_cast<int>(x0.size()); }
  int nu() const { return stages.empty() ? 0 : stages.front().nu(); }

  /// Sparse-form decision variable count: (N+1) states and N inputs.
  int decision_variables() const { return (horizon() + 1) * nx() + horizon() * nu(); }

  static StructuredQp zero(int N, int nx = NX, int nu = NU) {
    StructuredQp qp;
    qp.x0.setZero(nx);
    qp.stages.assign(static_cast<std::size_t>(N), Stage::zero(nx, nu));
    qp.Q_N.setZero(nx, nx);
    qp.q_N.setZero(nx);
    qp.xN_lower.setConstant(nx, -kInf);
    qp.xN_upper.setConstant(nx, kInf);
    return qp;
  }

  /// Lower/upper state bounds enforced at stage k (1..N).
  const StateVec& lower(int k) const { return k == horizon() ? xN_lower : stages[k].x_lower; }
  const StateVec& upper(int k) const { return k == horizon() ? xN_upper : stages[k].x_upper; }

  void validate() const {
    const int n = nx();
    const int m = nu();
    if (stages.empty()) throw DimensionMismatchError("QP horizon must be at least 1");
    auto dims = [](bool ok, const char* what) {
      if (!ok) throw DimensionMismatchError(std::string("inconsistent dimensions: ") + what);
    };
    for (const Stage& st : stages) {
      dims(st.A.rows() == n && st.A.cols() == n, "A");
      dims(st.B.rows() == n && st.B.cols() == m, "B");
      dims(st.g.size() == n && st.q.size() == n, "g/q");
      dims(st.Q.rows() == n && st.Q.cols() == n, "Q");
      dims(st.R.rows() == m && st.R.cols() == m, "R");
      dims(st.S.rows() == m && st.S.cols() == n, "S");
      dims(st.r.size() == m, "r");
      dims(st.x_lower.size() == n && st.x_upper.size() == n, "state bounds");
      dims(st.u_lower.size() == m && st.u_upper.size() == m, "input bounds");
    }
    dims(Q_N.rows() == n && Q_N.cols() == n && q_N.size() == n, "terminal cost");
    dims(xN_lower.size() == n && xN_upper.size() == n, "terminal bounds");
  }

  /// True when some bound pair has lower > upper.
  bool has_contradictory_bounds() const {
    for (int k = 0; k < horizon(); ++k) {
      if (k > 0 && (stages[k].x_lower.array() > stages[k].x_upper.array()).any()) return true;
      if ((stages[k].u_lower.array() > stages[k].u_upper.array()).any()) return true;
    }
    return (xN_lower.array() > xN_upper.array()).any();
  }
};

enum class QpStatus { optimal, max_iter, infeasible };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::max_iter: return "max_iter";
    case QpStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

template <int NX, int NU>
struct QpSolution {
  using StateVec = Eigen::Matrix<double, NX, 1>;
  using InputVec = Eigen::Matrix<double, NU, 1>;

  std::vector<StateVec> states;  ///< x_0..x_N
  std::vector<InputVec> inputs;  ///< u_0..u_{N-1}
  /// Dynamics multipliers; costates[k] belongs to x_{k+1} = A_k x_k + ... (k = 0..N-1).
  std::vector<StateVec> costates;
  /// Net bound multipliers (upper minus lower); index 0 of state_multipliers is unused.
  std::vector<StateVec> state_multipliers;
  std::vector<InputVec> input_multipliers;
  double objective = 0.0;
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
  double setup_time = 0.0;  ///< seconds spent before the iterations (condensing)
  double solve_time = 0.0;  ///< seconds, including setup_time
  std::vector<double> merit_history;
};

/// Objective of the structured QP at a given trajectory.
template <int NX, int NU>
double objective(const StructuredQp<NX, NU>& qp,
                 const std::vector<Eigen::Matrix<double, NX, 1>>& xs,
                 const std::vector<Eigen::Matrix<double, NU, 1>>& us) {
  double f = 0.0;
  for (int k = 0; k < qp.horizon(); ++k) {
    const auto& st = qp.stages[k];
    const auto& x = xs[k];
    const auto& u = us[k];
    f += 0.5 * x.dot(st.Q * x) + 0.5 * u.dot(st.R * u) + u.dot(st.S * x) + st.q.dot(x) + st.r.dot(u);
  }
  const auto& xN = xs[qp.horizon()];
  f += 0.5 * xN.dot(qp.Q_N * xN) + qp.q_N.dot(xN);
  return f;
}

/// States obtained by forward simulation of the dynamics from x_0.
template <int NX, int NU>
std::vector<Eigen::Matrix<double, NX, 1>> simulate(const StructuredQp<NX, NU>& qp,
                                                   const std::vector<Eigen::Matrix<double, NU, 1>>& us) {
  std::vector<Eigen::Matrix<double, NX, 1>> xs;
  xs.reserve(qp.stages.size() + 1);
  xs.push_back(qp.x0);
  for (int k = 0; k < qp.horizon(); ++k) {
    const auto& st = qp.stages[k];
    xs.push_back(st.A * xs.back() + st.B * us[k] + st.g);
  }
  return xs;
}

/// Fills costates from the state stationarity conditions by a backward sweep,
/// given states, inputs and the net bound multipliers.
template <int NX, int NU>
void recover_costates(const StructuredQp<NX, NU>& qp, QpSolution<NX, NU>& sol) {
  const int N = qp.horizon();
  sol.costates.resize(static_cast<std::size_t>(N));
  Eigen::Matrix<double, NX, 1> nu =
      qp.Q_N * sol.states[N] + qp.q_N + sol.state_multipliers[N];
  sol.costates[N - 1] = nu;
  for (int k = N - 1; k >= 1; --k) {
    const auto& st = qp.stages[k];
    nu = st.Q * sol.states[k] + st.S.transpose() * sol.inputs[k] + st.q + sol.state_multipliers[k] +
         st.A.transpose() * sol.costates[k];
    sol.costates[k - 1] = nu;
  }
}

struct KktResiduals {
  double dynamics = 0.0;          ///< max |x_{k+1} - A x_k - B u_k - g|
  double bounds = 0.0;            ///< max bound violation
  double stationarity = 0.0;      ///< max |gradient of the Lagrangian|
  double complementarity = 0.0;   ///< max |multiplier * distance to its bound|
  double multiplier_sign = 0.0;   ///< max multiplier of the wrong sign
  double gradient_scale = 0.0;    ///< max |cost gradient| entry, for relative tests

  double worst() const { return std::max({dynamics, bounds, stationarity, complementarity, multiplier_sign}); }
};

namespace detail {

template <class Vec>
void accumulate_bound_residuals(const Vec& z, const Vec& lo, const Vec& hi, const Vec& y, KktResiduals& res) {
  for (int i = 0; i < z.size(); ++i) {
    res.bounds = std::max({res.bounds, lo(i) - z(i), z(i) - hi(i)});
    const double upper_mult = std::max(y(i), 0.0);
    const double lower_mult = std::max(-y(i), 0.0);
    if (std::isfinite(hi(i))) {
      res.complementarity = std::max(res.complementarity, std::abs(upper_mult * (hi(i) - z(i))));
    } else {
      res.multiplier_sign = std::max(res.multiplier_sign, upper_mult);
    }
    if (std::isfinite(lo(i))) {
      res.complementarity = std::max(res.complementarity, std::abs(lower_mult * (z(i) - lo(i))));
    } else {
      res.multiplier_sign = std::max(res.multiplier_sign, lower_mult);
    }
  }
}

}  // namespace detail

/// Residuals of the KKT conditions at a candidate primal-dual solution.
template <int NX, int NU>
KktResiduals kkt_residuals(const StructuredQp<NX, NU>& qp, const QpSolution<NX, NU>& sol) {
  KktResiduals res;
  const int N = qp.horizon();
  res.dynamics = (sol.states[0] - qp.x0).cwiseAbs().maxCoeff();
  for (int k = 0; k < N; ++k) {
    const auto& st = qp.stages[k];
    const auto& x = sol.states[k];
    const auto& u = sol.inputs[k];
    res.dynamics = std::max(res.dynamics, (sol.states[k + 1] - st.A * x - st.B * u - st.g).cwiseAbs().maxCoeff());

    const Eigen::Matrix<double, NU, 1> grad_u = st.R * u + st.S * x + st.r;
    res.gradient_scale = std::max(res.gradient_scale, grad_u.cwiseAbs().maxCoeff());
    const Eigen::Matrix<double, NU, 1> stat_u = grad_u + st.B.transpose() * sol.costates[k] + sol.input_multipliers[k];
    res.stationarity = std::max(res.stationarity, stat_u.cwiseAbs().maxCoeff());
    detail::accumulate_bound_residuals(u, st.u_lower, st.u_upper, sol.input_multipliers[k], res);

    if (k > 0) {
      const Eigen::Matrix<double, NX, 1> grad_x = st.Q * x + st.S.transpose() * u + st.q;
      res.gradient_scale = std::max(res.gradient_scale, grad_x.cwiseAbs().maxCoeff());
      const Eigen::Matrix<double, NX, 1> stat_x =
          grad_x + st.A.transpose() * sol.costates[k] - sol.costates[k - 1] + sol.state_multipliers[k];
      res.stationarity = std::max(res.stationarity, stat_x.cwiseAbs().maxCoeff());
      detail::accumulate_bound_residuals(x, st.x_lower, st.x_upper, sol.state_multipliers[k], res);
    }
  }
  const Eigen::Matrix<double, NX, 1> grad_N = qp.Q_N * sol.states[N] + qp.q_N;
  res.gradient_scale = std::max(res.gradient_scale, grad_N.cwiseAbs().maxCoeff());
  const Eigen::Matrix<double, NX, 1> stat_N = grad_N - sol.costates[N - 1] + sol.state_multipliers[N];
  res.stationarity = std::max(res.stationarity, stat_N.cwiseAbs().maxCoeff());
  detail::accumulate_bound_residuals(sol.states[N], qp.xN_lower, qp.xN_upper, sol.state_multipliers[N], res);
  return res;
}

/// True when the symmetric matrix is positive definite.
template <class Mat>
bool is_positive_definite(const Mat& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.isApprox(m.transpose(), 1e-12)) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd(m).selfadjointView<Eigen::Lower>());
  return llt.info() == Eigen::Success;
}

// ---------------------------------------------------------------------------
// Text dump: a "structured_qp 1" header with nx, nu and N, followed by named
// row-major matrices. Values use 17 significant digits, so a dump/load cycle
// reproduces every double exactly.

namespace detail {

inline void write_double(std::ostream& os, double v) {
  char buf[40];
  if (std::isinf(v)) {
    os << (v > 0 ? "inf" : "-inf");
    return;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

template <class Mat>
void write_matrix(std::ostream& os, const char* name, const Mat& m) {
  os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      write_double(os, m(i, j));
    }
    os << '\n';
  }
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& is) : is_(is) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) throw DimensionMismatchError("unexpected end of QP dump");
    return w;
  }

  void expect(const std::string& w) {
    const std::string got = word();
    if (got != w) throw DimensionMismatchError("QP dump: expected '" + w + "', found '" + got + "'");
  }

  long integer() { return std::stol(word()); }

  double real() {
    const std::string w = word();
    if (w == "inf") return kInf;
    if (w == "-inf") return -kInf;
    std::size_t used = 0;
    const double v = std::stod(w, &used);
    if (used != w.size()) throw DimensionMismatchError("QP dump: bad number '" + w + "'");
    return v;
  }

  template <class Mat>
  void matrix(const char* name, Mat& m, long rows, long cols) {
    expect(name);
    if (integer() != rows || integer() != cols) {
      throw DimensionMismatchError(std::string("QP dump: wrong shape for ") + name);
    }
    m.resize(rows, cols);
    for (long i = 0; i < rows; ++i)
      for (long j = 0; j < cols; ++j) m(i, j) = real();
  }

 private:
  std::istream& is_;
};

}  // namespace detail

template <int NX, int NU>
void write_qp(std::ostream& os, const StructuredQp<NX, NU>& qp) {
  os << "structured_qp 1\n";
  os << "nx " << qp.nx() << " nu " << qp.nu() << " N " << qp.horizon() << '\n';
  detail::write_matrix(os, "x0", qp.x0.transpose());
  for (int k = 0; k < qp.horizon(); ++k) {
    const auto& st = qp.stages[k];
    os << "stage " << k << '\n';
    detail::write_matrix(os, "A", st.A);
    detail::write_matrix(os, "B", st.B);
    detail::write_matrix(os, "g", st.g.transpose());
    detail::write_matrix(os, "Q", st.Q);
    detail::write_matrix(os, "R", st.R);
    detail::write_matrix(os, "S", st.S);
    detail::write_matrix(os, "q", st.q.transpose());
    detail::write_matrix(os, "r", st.r.transpose());
    detail::write_matrix(os, "x_lower", st.x_lower.transpose());
    detail::write_matrix(os, "x_upper", st.x_upper.transpose());
    detail::write_matrix(os, "u_lower", st.u_lower.transpose());
    detail::write_matrix(os, "u_upper", st.u_upper.transpose());
  }
  os << "terminal\n";
  detail::write_matrix(os, "Q_N", qp.Q_N);
  detail::write_matrix(os, "q_N", qp.q_N.transpose());
  detail::write_matrix(os, "xN_lower", qp.xN_lower.transpose());
  detail::write_matrix(os, "xN_upper", qp.xN_upper.transpose());
}

template <int NX, int NU>
StructuredQp<NX, NU> read_qp(std::istream& is) {
  detail::TokenReader in(is);
  in.expect("structured_qp");
  in.expect("1");
  in.expect("nx");
  const long n = in.integer();
  in.expect("nu");
  const long m = in.integer();
  in.expect("N");
  const long N = in.integer();
  if ((NX != Eigen::Dynamic && n != NX) || (NU != Eigen::Dynamic && m != NU) || n <= 0 || m <= 0 || N <= 0) {
    throw DimensionMismatchError("QP dump dimensions do not match the requested problem type");
  }
  auto qp = StructuredQp<NX, NU>::zero(static_cast<int>(N), static_cast<int>(n), static_cast<int>(m));
  Eigen::RowVectorXd row;
  auto read_vec = [&](const char* name, auto& v, long len) {
    in.matrix(name, row, 1, len);
    v = row.transpose();
  };
  read_vec("x0", qp.x0, n);
  for (long k = 0; k < N; ++k) {
    in.expect("stage");
    if (in.integer() != k) throw DimensionMismatchError("QP dump: stages out of order");
    auto& st = qp.stages[static_cast<std::size_t>(k)];
    in.matrix("A", st.A, n, n);
    in.matrix("B", st.B, n, m);
    read_vec("g", st.g, n);
    in.matrix("Q", st.Q, n, n);
    in.matrix("R", st.R, m, m);
    in.matrix("S", st.S, m, n);
    read_vec("q", st.q, n);
    read_vec("r", st.r, m);
    read_vec("x_lower", st.x_lower, n);
    read_vec("x_upper", st.x_upper, n);
    read_vec("u_lower", st.u_lower, m);
    read_vec("u_upper", st.u_upper, m);
  }
  in.expect("terminal");
  in.matrix("Q_N", qp.Q_N, n, n);
  read_vec("q_N", qp.q_N, n);
  read_vec("xN_lower", qp.xN_lower, n);
  read_vec("xN_upper", qp.xN_upper, n);
  return qp;
}

}  // namespace mpcc::qp
