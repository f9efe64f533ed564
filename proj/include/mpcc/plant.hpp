#pragma once

// Lumped-mass biaxial machine: a double integrator per axis, discretized
// exactly under a zero-order hold.

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mpcc/errors.hpp"

namespace mpcc {

struct MachineState {
  double X = 0.0;
  double Y = 0.0;
  double vx = 0.0;
  double vy = 0.0;

  Eigen::Vector4d vector() const { return {X, Y, vx, vy}; }
  static MachineState from_vector(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
  double speed() const { return std::hypot(vx, vy); }
  friend bool operator==(const MachineState&, const MachineState&) = default;
};

struct MachineInput {
  double ax = 0.0;
  double ay = 0.0;

  Eigen::Vector2d vector() const { return {ax, ay}; }
  friend bool operator==(const MachineInput&, const MachineInput&) = default;
};

/// Physical limits and the tolerance band.
struct Limits {
  double a_max = 20.0;        ///< m/s^2, per axis
  double v_max = 0.2;         ///< m/s, per axis
  double v_terminal = 0.002;  ///< m/s, terminal velocity box
  double tol = 20e-6;         ///< m, contour band half-width

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(name, std::string(name) + " must be a positive finite number");
      }
    };
    positive(a_max, "a_max");
    positive(v_max, "v_max");
    positive(v_terminal, "v_terminal");
    positive(tol, "tol");
    if (!(v_terminal < v_max)) throw ConfigError("v_terminal", "v_terminal must be smaller than v_max");
  }
};

using PlantA = Eigen::Matrix4d;
using PlantB = Eigen::Matrix<double, 4, 2>;

/// Exact ZOH discretization of the double integrator with step T.
inline std::pair<PlantA, PlantB> discretize(double T) {
  if (!(T > 0.0)) throw DegenerateInputError("sampling time must be positive");
  PlantA A = PlantA::Identity();
  A(0, 2) = T;
  A(1, 3) = T;
  PlantB B = PlantB::Zero();
  B(0, 0) = 0.5 * T * T;
  B(1, 1) = 0.5 * T * T;
  B(2, 0) = T;
  B(3, 1) = T;
  return {A, B};
}

/// Propagates one sampling period. Inputs are applied as given.
inline MachineState step(const MachineState& x, const MachineInput& u, double T) {
  const double half_t2 = 0.5 * T * T;
  return {x.X + T * x.vx + half_t2 * u.ax, x.Y + T * x.vy + half_t2 * u.ay, x.vx + T * u.ax,
          x.vy + T * u.ay};
}

struct Violation {
  std::string quantity;  ///< "v_x", "v_y", "a_x" or "a_y"
  double value = 0.0;
  double bound = 0.0;
  double margin = 0.0;  ///< |value| - bound, positive
};

/// Lists every velocity or acceleration component outside its box by more
/// than `slack`. The boundary itself is feasible.
inline std::vector<Violation> check_feasible(const MachineState& x, const MachineInput& u,
                                             const Limits& limits, double slack = 0.0) {
  std::vector<Violation> out;
  auto check = [&](const char* name, double value, double bound) {
    const double excess = std::abs(value) - bound;
    if (excess > slack || !std::isfinite(value)) out.push_back({name, value, bound, excess});
  };
  check("v_x", x.vx, limits.v_max);
  check("v_y", x.vy, limits.v_max);
  check("a_x", u.ax, limits.a_max);
  check("a_y", u.ay, limits.a_max);
  return out;
}

}  // namespace mpcc
