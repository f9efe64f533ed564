#pragma once

// Shared pieces of the primal-dual interior-point backends: settings and the
// slack/multiplier bookkeeping for a block of box constraints lo <= z <= hi.

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <cmath>
#include <limits>
#include <vector>

namespace mpcc::qp {

struct IpSettings {
  int max_iter = 100;
  double tol_primal = 1e-9;   ///< absolute dynamics / slack residual
  double tol_dual = 1e-8;     ///< stationarity, relative to the gradient scale
  double tol_comp = 1e-13;    ///< mean complementarity, relative to max(1, |f|)
  // Accepted when round-off stalls the merit before the tight tolerances hold.
  double acc_primal = 1e-8;
  double acc_dual = 1e-6;
  double acc_comp = 1e-10;
  double step_fraction = 0.995;
  double initial_mu = 1.0;
  bool monotone_merit = true;  ///< backtrack steps that would raise the merit
};

/// Tight or acceptable convergence test on scaled residuals.
inline bool ip_converged(const IpSettings& s, bool acceptable, double primal, double dual, double mu,
                         double grad_scale, double objective) {
  const double gs = std::max(1.0, grad_scale);
  const double fs = std::max(1.0, std::abs(objective));
  if (acceptable) return primal <= s.acc_primal && dual <= s.acc_dual * gs && mu <= s.acc_comp * fs;
  return primal <= s.tol_primal && dual <= s.tol_dual * gs && mu <= s.tol_comp * fs;
}

/// Degraded acceptance threshold for iterates returned on max_iter.
inline constexpr double kDegradedResidual = 1e-4;

/// CPU time consumed by the calling thread. Monotonic, and blind to time
/// the thread spends preempted, so solver timings on a shared core measure
/// the solver rather than the scheduler.
struct ThreadCpuClock {
  using duration = std::chrono::nanoseconds;
  using rep = duration::rep;
  using period = duration::period;
  using time_point = std::chrono::time_point<ThreadCpuClock>;
  static constexpr bool is_steady = true;

  static time_point now() noexcept {
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return time_point(duration(static_cast<rep>(ts.tv_sec) * 1000000000 + ts.tv_nsec));
  }
};

using Clock = ThreadCpuClock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Box constraints on one vector-valued quantity z with slacks
/// sl = z - lo, su = hi - z and multipliers ll, lu >= 0. M is the size of z
/// when known at compile time.
template <int M = Eigen::Dynamic>
class BoundBlockT {
 public:
  using Vec = Eigen::Matrix<double, M, 1>;

  /// Primal-dual part of the block, the only state that changes per step.
  struct Iterate {
    Vec sl, su, ll, lu;
  };

  BoundBlockT() = default;

  template <class V1, class V2>
  void assign(const Eigen::MatrixBase<V1>& lo, const Eigen::MatrixBase<V2>& hi) {
    const Eigen::Index n = lo.size();
    lo_ = lo;
    hi_ = hi;
    has_lo_.resize(n);
    has_hi_.resize(n);
    active_ = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      has_lo_(i) = std::isfinite(lo_(i)) ? 1.0 : 0.0;
      has_hi_(i) = std::isfinite(hi_(i)) ? 1.0 : 0.0;
      // infinite bounds are kept finite so masked arithmetic stays clean
      if (has_lo_(i) == 0.0) lo_(i) = 0.0;
      if (has_hi_(i) == 0.0) hi_(i) = 0.0;
      active_ += static_cast<int>(has_lo_(i) + has_hi_(i));
    }
    for (Vec* v : {&it_.sl, &it_.su, &it_.ll, &it_.lu, &rl_, &ru_, &dsl_, &dsu_, &dll_, &dlu_, &asl_, &asu_, &all_,
                   &alu_, &net_}) {
      v->setZero(n);
    }
  }

  Eigen::Index size() const { return lo_.size(); }
  int active_count() const { return active_; }

  const Iterate& iterate() const { return it_; }
  void set_iterate(const Iterate& it) { it_ = it; }

  /// Interior starting point around z.
  template <class V>
  void initialize(const Eigen::MatrixBase<V>& z, double mu0) {
    for (Eigen::Index i = 0; i < size(); ++i) {
      const bool two_sided = has_lo_(i) > 0 && has_hi_(i) > 0;
      const double width = two_sided ? hi_(i) - lo_(i) : 0.0;
      const double floor =
          two_sided ? std::max(0.1 * width, 1e-10) : 1e-2 * std::max(1.0, std::abs(has_lo_(i) > 0 ? lo_(i) : hi_(i)));
      it_.sl(i) = has_lo_(i) > 0 ? std::max(z(i) - lo_(i), floor) : 1.0;
      it_.su(i) = has_hi_(i) > 0 ? std::max(hi_(i) - z(i), floor) : 1.0;
      it_.ll(i) = has_lo_(i) > 0 ? mu0 / it_.sl(i) : 0.0;
      it_.lu(i) = has_hi_(i) > 0 ? mu0 / it_.su(i) : 0.0;
    }
  }

  /// Slack residuals at z; returns the largest magnitude.
  template <class V>
  double residuals(const Eigen::MatrixBase<V>& z) {
    rl_ = (z - lo_ - it_.sl).cwiseProduct(has_lo_);
    ru_ = (hi_ - z - it_.su).cwiseProduct(has_hi_);
    if (size() == 0) return 0.0;
    return std::max(rl_.cwiseAbs().maxCoeff(), ru_.cwiseAbs().maxCoeff());
  }

  double residual_l1() const { return rl_.cwiseAbs().sum() + ru_.cwiseAbs().sum(); }

  double complementarity_sum() const {
    return (it_.ll.cwiseProduct(it_.sl).cwiseProduct(has_lo_) + it_.lu.cwiseProduct(it_.su).cwiseProduct(has_hi_))
        .sum();
  }

  /// Net multiplier lu - ll, the bound term of the Lagrangian gradient.
  const Vec& net_multiplier() {
    net_ = it_.lu - it_.ll;
    return net_;
  }

  /// Diagonal Hessian contribution ll/sl + lu/su.
  template <class V>
  void add_sigma(Eigen::MatrixBase<V>& diag) const {
    diag += (has_lo_.cwiseProduct(it_.ll).cwiseQuotient(it_.sl) + has_hi_.cwiseProduct(it_.lu).cwiseQuotient(it_.su));
  }
  template <class V>
  void add_sigma(Eigen::MatrixBase<V>&& diag) const {
    add_sigma(diag);
  }

  /// Linear term of the reduced Newton system. The complementarity target is
  /// sigma_mu, minus the affine second-order term when `corrector` is set.
  template <class V>
  void add_rhs(Eigen::MatrixBase<V>& g, double sigma_mu, bool corrector) const {
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (has_lo_(i) > 0) {
        const double w = sigma_mu - (corrector ? asl_(i) * all_(i) : 0.0);
        g(i) += (it_.ll(i) * rl_(i) - w) / it_.sl(i);
      }
      if (has_hi_(i) > 0) {
        const double w = sigma_mu - (corrector ? asu_(i) * alu_(i) : 0.0);
        g(i) += (w - it_.lu(i) * ru_(i)) / it_.su(i);
      }
    }
  }
  template <class V>
  void add_rhs(Eigen::MatrixBase<V>&& g, double sigma_mu, bool corrector) const {
    add_rhs(g, sigma_mu, corrector);
  }

  /// Slack and multiplier steps implied by the primal step dz.
  template <class V>
  void recover(const Eigen::MatrixBase<V>& dz, double sigma_mu, bool corrector) {
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (has_lo_(i) > 0) {
        const double w = sigma_mu - (corrector ? asl_(i) * all_(i) : 0.0);
        dsl_(i) = dz(i) + rl_(i);
        dll_(i) = (w - it_.ll(i) * it_.sl(i) - it_.ll(i) * dsl_(i)) / it_.sl(i);
      } else {
        dsl_(i) = dll_(i) = 0.0;
      }
      if (has_hi_(i) > 0) {
        const double w = sigma_mu - (corrector ? asu_(i) * alu_(i) : 0.0);
        dsu_(i) = -dz(i) + ru_(i);
        dlu_(i) = (w - it_.lu(i) * it_.su(i) - it_.lu(i) * dsu_(i)) / it_.su(i);
      } else {
        dsu_(i) = dlu_(i) = 0.0;
      }
    }
  }

  /// Net multiplier after a full step.
  const Vec& net_after_step() {
    net_ = (it_.lu + dlu_).cwiseProduct(has_hi_) - (it_.ll + dll_).cwiseProduct(has_lo_);
    return net_;
  }

  /// Adds a correction dz of the primal step, with the slack and multiplier
  /// changes it implies, to the current step.
  template <class V>
  void refine(const Eigen::MatrixBase<V>& dz) {
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (has_lo_(i) > 0) {
        dsl_(i) += dz(i);
        dll_(i) -= it_.ll(i) * dz(i) / it_.sl(i);
      }
      if (has_hi_(i) > 0) {
        dsu_(i) -= dz(i);
        dlu_(i) += it_.lu(i) * dz(i) / it_.su(i);
      }
    }
  }

  /// Keeps the current step as the affine predictor for the corrector.
  void store_affine() {
    asl_ = dsl_;
    asu_ = dsu_;
    all_ = dll_;
    alu_ = dlu_;
  }

  /// Largest alpha in (0, 1] keeping slacks and multipliers nonnegative.
  double max_step() const {
    double alpha = 1.0;
    auto limit = [&alpha](double v, double dv) {
      if (dv < 0.0) alpha = std::min(alpha, -v / dv);
    };
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (has_lo_(i) > 0) {
        limit(it_.sl(i), dsl_(i));
        limit(it_.ll(i), dll_(i));
      }
      if (has_hi_(i) > 0) {
        limit(it_.su(i), dsu_(i));
        limit(it_.lu(i), dlu_(i));
      }
    }
    return alpha;
  }

  /// Complementarity sum after a trial step alpha.
  double complementarity_after(double alpha) const {
    return ((it_.sl + alpha * dsl_).cwiseProduct(it_.ll + alpha * dll_).cwiseProduct(has_lo_) +
            (it_.su + alpha * dsu_).cwiseProduct(it_.lu + alpha * dlu_).cwiseProduct(has_hi_))
        .sum();
  }

  void update(double alpha) {
    it_.sl += alpha * dsl_.cwiseProduct(has_lo_);
    it_.ll += alpha * dll_.cwiseProduct(has_lo_);
    it_.su += alpha * dsu_.cwiseProduct(has_hi_);
    it_.lu += alpha * dlu_.cwiseProduct(has_hi_);
  }

  /// -1 if the lower bound looks active (multiplier above slack), +1 for the
  /// upper bound, 0 otherwise.
  int activity(Eigen::Index i) const {
    if (has_lo_(i) > 0 && it_.ll(i) > it_.sl(i)) return -1;
    if (has_hi_(i) > 0 && it_.lu(i) > it_.su(i)) return 1;
    return 0;
  }

  double lower_bound(Eigen::Index i) const { return has_lo_(i) > 0 ? lo_(i) : -std::numeric_limits<double>::infinity(); }
  double upper_bound(Eigen::Index i) const { return has_hi_(i) > 0 ? hi_(i) : std::numeric_limits<double>::infinity(); }

  double max_multiplier() const { return size() == 0 ? 0.0 : std::max(it_.ll.maxCoeff(), it_.lu.maxCoeff()); }

 private:
  Vec lo_, hi_, has_lo_, has_hi_;
  Iterate it_;
  Vec rl_, ru_;
  Vec dsl_, dsu_, dll_, dlu_;
  Vec asl_, asu_, all_, alu_;
  Vec net_;
  int active_ = 0;
};

using BoundBlock = BoundBlockT<>;

}  // namespace mpcc::qp
