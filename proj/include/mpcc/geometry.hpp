#pragma once

// Arc-length parametrized piecewise-linear contours.
//
// A ParametricPath stores its vertices together with the cumulative arc
// length at each vertex. Evaluation clamps s to [0, L]; at a vertex shared by
// two segments the tangent of the earlier segment is used.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mpcc/errors.hpp"

namespace mpcc {

using Vec2 = Eigen::Vector2d;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Left-hand normal (-t_y, t_x) of a tangent.
inline Vec2 left_normal(const Vec2& t) { return {-t.y(), t.x()}; }

struct PathPoint {
  Vec2 position;
  Vec2 tangent;
  Vec2 normal;
  double s = 0.0;
};

struct Projection {
  double s = 0.0;  ///< arc length of the closest point
  double d = 0.0;  ///< signed distance, positive on the normal side
};

class ParametricPath {
 public:
  static constexpr double kDefaultTolerance = 20e-6;

  ParametricPath() = default;

  /// Builds a path from its vertices. Consecutive duplicates are rejected; a
  /// single vertex yields a zero-length path.
  explicit ParametricPath(std::vector<Vec2> vertices,
                          double tolerance_halfwidth = kDefaultTolerance)
      : vertices_(std::move(vertices)), tolerance_(tolerance_halfwidth) {
    if (vertices_.empty()) throw DegenerateInputError("path needs at least one vertex");
    if (!(tolerance_ > 0.0)) throw DegenerateInputError("tolerance half-width must be positive");
    cumulative_.reserve(vertices_.size());
    cumulative_.push_back(0.0);
    tangents_.reserve(vertices_.size());
    for (std::size_t i = 1; i < vertices_.size(); ++i) {
      const Vec2 delta = vertices_[i] - vertices_[i - 1];
      const double len = delta.norm();
      if (!std::isfinite(len)) throw DegenerateInputError("non-finite vertex");
      if (!(len > 0.0)) {
        throw DegenerateInputError("duplicate consecutive vertices at index " + std::to_string(i));
      }
      cumulative_.push_back(cumulative_.back() + len);
      tangents_.push_back(delta / len);
    }
  }

  double length() const noexcept { return cumulative_.back(); }
  double tolerance_halfwidth() const noexcept { return tolerance_; }
  std::size_t segment_count() const noexcept { return tangents_.size(); }
  const std::vector<Vec2>& vertices() const noexcept { return vertices_; }
  const std::vector<double>& cumulative_arclength() const noexcept { return cumulative_; }

  double clamp(double s) const noexcept { return std::clamp(s, 0.0, length()); }

  /// Segment containing s (after clamping). A breakpoint belongs to the
  /// segment that ends there.
  std::size_t segment_index(double s) const noexcept {
    if (tangents_.empty()) return 0;
    s = clamp(s);
    const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), s);
    const auto j = static_cast<std::size_t>(it - cumulative_.begin());
    return j == 0 ? 0 : std::min(j - 1, tangents_.size() - 1);
  }

  /// Unit tangent of segment i; a zero-length path reports +x.
  Vec2 segment_tangent(std::size_t i) const {
    return tangents_.empty() ? Vec2(1.0, 0.0) : tangents_[i];
  }

  PathPoint eval(double s) const {
    PathPoint p;
    p.s = clamp(s);
    const std::size_t i = segment_index(p.s);
    p.tangent = segment_tangent(i);
    p.normal = left_normal(p.tangent);
    p.position = vertices_[i] + (p.s - cumulative_[i]) * p.tangent;
    return p;
  }

  /// Four-quadrant tangent angle in (-pi, pi].
  double angle(double s) const {
    const Vec2 t = segment_tangent(segment_index(s));
    const double a = std::atan2(t.y(), t.x());
    return a <= -std::numbers::pi ? std::numbers::pi : a;
  }

  /// Closest point among the segments overlapping
  /// [s_guess - halfwidth, s_guess + halfwidth]. Ties go to the larger s.
  Projection project(const Vec2& point, double s_guess, double halfwidth) const {
    if (!(halfwidth > 0.0)) throw EmptyWindowError("search half-width must be positive");
    if (tangents_.empty()) return project_onto_vertex(point);
    const double lo = clamp(s_guess - halfwidth);
    const double hi = clamp(s_guess + halfwidth);
    std::size_t last = segment_index(hi);
    // a window ending exactly on a breakpoint also touches the next segment
    if (last + 1 < tangents_.size() && hi >= cumulative_[last + 1]) ++last;
    return project_range(point, segment_index(lo), last);
  }

  /// Closest point over every segment of the path.
  Projection project_global(const Vec2& point) const {
    if (tangents_.empty()) return project_onto_vertex(point);
    return project_range(point, 0, tangents_.size() - 1);
  }

 private:
  Projection project_onto_vertex(const Vec2& point) const {
    const Vec2 diff = point - vertices_.front();
    return {0.0, diff.y() >= 0.0 ? diff.norm() : -diff.norm()};
  }

  Projection project_range(const Vec2& point, std::size_t first, std::size_t last) const {
    if (first > last || last >= tangents_.size()) throw EmptyWindowError("projection window is empty");
    double best_dist = std::numeric_limits<double>::infinity();
    Projection best;
    for (std::size_t i = first; i <= last; ++i) {
      const Vec2& t = tangents_[i];
      const double seg_len = cumulative_[i + 1] - cumulative_[i];
      const Vec2 rel = point - vertices_[i];
      const double along = std::clamp(t.dot(rel), 0.0, seg_len);
      const Vec2 offset = rel - along * t;
      const double dist = offset.norm();
      if (dist <= best_dist) {
        best_dist = dist;
        const double side = left_normal(t).dot(offset);
        best.s = cumulative_[i] + along;
        best.d = side < 0.0 ? -dist : dist;
      }
    }
    return best;
  }

  std::vector<Vec2> vertices_;
  std::vector<double> cumulative_;
  std::vector<Vec2> tangents_;
  double tolerance_ = kDefaultTolerance;
};

/// Largest tangent-angle change (radians) between consecutive segments.
inline double max_turn_angle(const ParametricPath& path) {
  double worst = 0.0;
  for (std::size_t i = 1; i < path.segment_count(); ++i) {
    const Vec2 a = path.segment_tangent(i - 1);
    const Vec2 b = path.segment_tangent(i);
    worst = std::max(worst, std::abs(std::atan2(cross2(a, b), a.dot(b))));
  }
  return worst;
}

/// Vertices at which the tangent direction jumps by more than min_angle.
inline std::vector<std::size_t> sharp_vertices(const ParametricPath& path, double min_angle) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < path.segment_count(); ++i) {
    const Vec2 a = path.segment_tangent(i - 1);
    const Vec2 b = path.segment_tangent(i);
    if (std::abs(std::atan2(cross2(a, b), a.dot(b))) > min_angle) out.push_back(i);
  }
  return out;
}

namespace detail {

// sample points closer than this are merged
inline constexpr double kMergeDistance = 1e-12;

// Samples the fillet arc of a rounded corner, always keeping the endpoints and
// any axis-extreme points on the sweep so the bounding box is preserved.
inline void append_fillet(std::vector<Vec2>& out, const Vec2& center, double radius,
                          double start_angle, double sweep, double chord_tolerance) {
  double max_step = std::numbers::pi / 2.0;
  if (chord_tolerance < radius) max_step = std::min(max_step, 2.0 * std::acos(1.0 - chord_tolerance / radius));
  const int pieces = std::max(1, static_cast<int>(std::ceil(std::abs(sweep) / max_step)));

  std::vector<double> params;  // fraction of the sweep, in [0, 1]
  params.reserve(static_cast<std::size_t>(pieces) + 5);
  for (int j = 0; j <= pieces; ++j) params.push_back(static_cast<double>(j) / pieces);
  const double half_pi = std::numbers::pi / 2.0;
  const double a0 = std::min(start_angle, start_angle + sweep);
  const double a1 = std::max(start_angle, start_angle + sweep);
  for (double k = std::ceil(a0 / half_pi); k * half_pi < a1; k += 1.0) {
    const double frac = (k * half_pi - start_angle) / sweep;
    if (frac > 0.0 && frac < 1.0) params.push_back(frac);
  }
  std::sort(params.begin(), params.end());

  for (double f : params) {
    const double a = start_angle + f * sweep;
    // exact axis directions avoid cos(pi/2) round-off on the extreme points
    const double k = a / half_pi;
    Vec2 dir(std::cos(a), std::sin(a));
    if (std::abs(k - std::round(k)) < 1e-12) {
      const long q = ((static_cast<long>(std::lround(k)) % 4) + 4) % 4;
      dir = q == 0 ? Vec2(1, 0) : q == 1 ? Vec2(0, 1) : q == 2 ? Vec2(-1, 0) : Vec2(0, -1);
    }
    const Vec2 p = center + radius * dir;
    if (out.empty() || (p - out.back()).norm() > kMergeDistance) out.push_back(p);
  }
}

}  // namespace detail

/// Builds a piecewise-linear path from waypoints, replacing every interior
/// corner with positive radius by a sampled circular fillet whose chords stay
/// within chord_tolerance of the true arc.
inline ParametricPath build_path(const std::vector<Vec2>& waypoints,
                                 const std::vector<double>& corner_radii,
                                 double chord_tolerance,
                                 double tolerance_halfwidth = ParametricPath::kDefaultTolerance) {
  if (waypoints.size() < 2) throw DegenerateInputError("need at least two waypoints");
  if (corner_radii.size() != waypoints.size() - 2) {
    throw DegenerateInputError("expected one corner radius per interior waypoint");
  }
  if (!(chord_tolerance > 0.0)) throw DegenerateInputError("chord tolerance must be positive");
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (!((waypoints[i] - waypoints[i - 1]).norm() > 0.0)) {
      throw DegenerateInputError("duplicate consecutive waypoints at index " + std::to_string(i));
    }
  }

  std::vector<Vec2> out{waypoints.front()};
  for (std::size_t i = 1; i + 1 < waypoints.size(); ++i) {
    const double radius = corner_radii[i - 1];
    if (!(radius >= 0.0)) throw DegenerateInputError("corner radius must be non-negative");
    const Vec2 in = waypoints[i] - waypoints[i - 1];
    const Vec2 outv = waypoints[i + 1] - waypoints[i];
    const Vec2 d1 = in.normalized();
    const Vec2 d2 = outv.normalized();
    const double turn = std::atan2(cross2(d1, d2), d1.dot(d2));  // signed, (-pi, pi]
    if (radius == 0.0 || std::abs(turn) < 1e-12) {
      out.push_back(waypoints[i]);
      continue;
    }
    if (std::abs(turn) >= std::numbers::pi - 1e-12) {
      throw DegenerateInputError("cannot round a full reversal at waypoint " + std::to_string(i));
    }
    const double setback = radius * std::tan(std::abs(turn) / 2.0);
    if (setback > 0.5 * in.norm() || setback > 0.5 * outv.norm()) {
      throw OverlappingRoundingError("radius at waypoint " + std::to_string(i) +
                                     " consumes more than half of an adjacent segment");
    }
    const double side = turn > 0.0 ? 1.0 : -1.0;  // +1: center on the left
    const Vec2 entry = waypoints[i] - setback * d1;
    const Vec2 center = entry + side * radius * left_normal(d1);
    const Vec2 r0 = entry - center;
    detail::append_fillet(out, center, radius, std::atan2(r0.y(), r0.x()), turn, chord_tolerance);
  }
  if ((waypoints.back() - out.back()).norm() > detail::kMergeDistance) {
    out.push_back(waypoints.back());
  } else {
    out.back() = waypoints.back();
  }
  return ParametricPath(std::move(out), tolerance_halfwidth);
}

/// Sigma-shaped test contour: 0.10 m wide, 0.20 m high, traversed from the
/// bottom-right end to the top-right end. The middle corner has a 1 cm fillet;
/// the two outer corners have 0.5 mm fillets, or none when `sharp` is set.
inline ParametricPath sigma_geometry(bool sharp, double chord_tolerance = 1e-7) {
  constexpr double width = 0.10;
  constexpr double height = 0.20;
  constexpr double middle_radius = 0.01;
  const double outer_radius = sharp ? 0.0 : 5e-4;
  // a fillet on a 45 degree corner pulls the leftmost point in by sqrt(2) r
  const double shift = std::numbers::sqrt2 * outer_radius;
  const std::vector<Vec2> waypoints{
      {width, 0.0},
      {-shift, 0.0},
      {width - shift, height / 2.0},
      {-shift, height},
      {width, height},
  };
  return build_path(waypoints, {outer_radius, middle_radius, outer_radius}, chord_tolerance);
}

/// Writes rows (s, x, y) with a one-line header; 17 significant digits.
inline void write_path_csv(const ParametricPath& path, std::ostream& os) {
  os << "s,x,y\n";
  char buf[128];
  for (std::size_t i = 0; i < path.vertices().size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", path.cumulative_arclength()[i],
                  path.vertices()[i].x(), path.vertices()[i].y());
    os << buf;
  }
}

/// Reads a path written by write_path_csv. Arc length is recomputed from the
/// coordinates; the s column must agree with it to 1e-9 m.
inline ParametricPath read_path_csv(std::istream& is,
                                    double tolerance_halfwidth = ParametricPath::kDefaultTolerance) {
  std::string line;
  if (!std::getline(is, line)) throw DegenerateInputError("path CSV is empty");
  std::vector<Vec2> vertices;
  std::vector<double> given_s;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double s = 0, x = 0, y = 0;
    if (!(row >> s >> x >> y)) {
      throw DegenerateInputError("path CSV line " + std::to_string(lineno) + ": expected s,x,y");
    }
    vertices.emplace_back(x, y);
    given_s.push_back(s);
  }
  // a zero-length path may be given as repeated copies of one point
  if (!vertices.empty() &&
      std::all_of(vertices.begin(), vertices.end(), [&](const Vec2& v) { return v == vertices.front(); })) {
    vertices.resize(1);
    given_s.resize(1);
  }
  ParametricPath path(std::move(vertices), tolerance_halfwidth);
  for (std::size_t i = 0; i < given_s.size(); ++i) {
    if (std::abs(given_s[i] - path.cumulative_arclength()[i]) > 1e-9) {
      throw DegenerateInputError("path CSV: s column disagrees with vertex spacing at row " +
                                 std::to_string(i + 1));
    }
  }
  return path;
}

inline ParametricPath load_path_csv(const std::string& filename,
                                    double tolerance_halfwidth = ParametricPath::kDefaultTolerance) {
  std::ifstream is(filename);
  if (!is) throw DegenerateInputError("cannot open path file '" + filename + "'");
  return read_path_csv(is, tolerance_halfwidth);
}

}  // namespace mpcc
