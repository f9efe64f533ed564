#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "mpcc/geometry.hpp"
#include "support.hpp"

using namespace mpcc;
using mpcc::testing::brute_force_projection;

namespace {

const ParametricPath& straight() {
  static const ParametricPath path({{0.0, 0.0}, {0.1, 0.0}});
  return path;
}

const ParametricPath& ell() {
  static const ParametricPath path({{0.0, 0.0}, {0.1, 0.0}, {0.1, 0.1}});
  return path;
}

}  // namespace

TEST(BuildPath, SingleStraightSegment) {
  const auto path = build_path({{0, 0}, {0.1, 0}}, {}, 1e-7);
  EXPECT_DOUBLE_EQ(path.length(), 0.1);
  EXPECT_EQ(path.segment_count(), 1u);
}

TEST(BuildPath, ZeroRadiusKeepsSharpCorner) {
  const auto path = build_path({{0, 0}, {0.1, 0}, {0.1, 0.1}}, {0.0}, 1e-3);
  EXPECT_NEAR(path.length(), 0.2, 1e-15);
  ASSERT_EQ(path.vertices().size(), 3u);
  EXPECT_EQ(path.vertices()[1], Vec2(0.1, 0.0));
}

TEST(BuildPath, FilletLengthAndChordDeviation) {
  const double r = 0.01, tol = 1e-7;
  const auto path = build_path({{0, 0}, {0.1, 0}, {0.1, 0.1}}, {r}, tol);
  EXPECT_NEAR(path.length(), 0.2 - 2 * r + std::numbers::pi / 2 * r, 1e-5);
  const Vec2 center(0.1 - r, r);
  for (std::size_t i = 0; i + 1 < path.vertices().size(); ++i) {
    const Vec2 a = path.vertices()[i], b = path.vertices()[i + 1];
    const bool on_arc = a.x() >= 0.1 - r - 1e-15 && b.y() <= r + 1e-15;
    if (!on_arc) continue;
    EXPECT_NEAR((a - center).norm(), r, 1e-15);
    // dense sampling of every chord against the analytic circle
    for (int j = 0; j <= 64; ++j) {
      const Vec2 p = a + (b - a) * (j / 64.0);
      EXPECT_LE(r - (p - center).norm(), tol);
    }
  }
}

TEST(BuildPath, RejectsOverlappingRadius) {
  EXPECT_THROW(build_path({{0, 0}, {0.01, 0}, {0.01, 0.1}}, {0.006}, 1e-7), OverlappingRoundingError);
}

TEST(BuildPath, RejectsDuplicateWaypoints) {
  EXPECT_THROW(build_path({{0, 0}, {0, 0}, {0.1, 0}}, {0.0}, 1e-7), DegenerateInputError);
  EXPECT_THROW(build_path({{0, 0}, {0.1, 0}}, {}, 0.0), DegenerateInputError);
}

TEST(BuildPath, LengthConvergesFirstOrderInChordTolerance) {
  const double r = 0.01;
  const double exact = 0.2 - 2 * r + std::numbers::pi / 2 * r;
  double prev = 0.0;
  for (double tol : {1e-5, 5e-6, 2.5e-6, 1.25e-6}) {
    const double err = exact - build_path({{0, 0}, {0.1, 0}, {0.1, 0.1}}, {r}, tol).length();
    EXPECT_GT(err, 0.0);
    if (prev > 0.0) {
      // sample counts are integers, so the ratio is only roughly two
      EXPECT_GT(prev / err, 1.4);
      EXPECT_LT(prev / err, 2.9);
    }
    prev = err;
  }
}

TEST(Sigma, BoundingBox) {
  for (bool sharp : {true, false}) {
    const auto path = sigma_geometry(sharp);
    Vec2 lo = path.vertices().front(), hi = lo;
    for (const auto& v : path.vertices()) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    EXPECT_NEAR(hi.x() - lo.x(), 0.10, 1e-9) << sharp;
    EXPECT_NEAR(hi.y() - lo.y(), 0.20, 1e-9) << sharp;
  }
}

TEST(Sigma, SharpVariantHasTwoCorners) {
  const auto path = sigma_geometry(true);
  const auto corners = sharp_vertices(path, 10.0 * std::numbers::pi / 180.0);
  EXPECT_EQ(corners.size(), 2u);
}

TEST(Sigma, SmoothVariantTurnsAreArcSampled) {
  const double tol = 1e-7;
  const auto path = sigma_geometry(false, tol);
  EXPECT_TRUE(sharp_vertices(path, 10.0 * std::numbers::pi / 180.0).empty());
  EXPECT_LE(max_turn_angle(path), 2.0 * std::acos(1.0 - tol / 5e-4) + 1e-9);
}

TEST(Sigma, MiddleFilletAndDiagonals) {
  const auto path = sigma_geometry(true);
  ASSERT_GE(path.segment_count(), 4u);
  // second segment is the lower diagonal
  const auto& v = path.vertices();
  const double expected = std::atan2(v[2].y() - v[1].y(), v[2].x() - v[1].x());
  const double s_mid = 0.5 * (path.cumulative_arclength()[1] + path.cumulative_arclength()[2]);
  EXPECT_NEAR(path.angle(s_mid), std::numbers::pi / 4, 1e-12);
  EXPECT_NEAR(path.angle(s_mid), expected, 1e-15);
  // no segment of the sharp variant turns by more than the outer corners
  EXPECT_NEAR(max_turn_angle(path), 3 * std::numbers::pi / 4, 1e-12);
}

TEST(Eval, StraightSegment) {
  const auto p = straight().eval(0.05);
  EXPECT_EQ(p.position, Vec2(0.05, 0.0));
  EXPECT_EQ(p.tangent, Vec2(1.0, 0.0));
  EXPECT_EQ(p.normal, Vec2(0.0, 1.0));
}

TEST(Eval, ClampsPastTheEnd) {
  EXPECT_EQ(straight().eval(0.2).position, Vec2(0.1, 0.0));
  EXPECT_EQ(straight().eval(-1.0).position, Vec2(0.0, 0.0));
}

TEST(Eval, BreakpointUsesEarlierSegment) {
  const auto p = ell().eval(0.1);
  EXPECT_EQ(p.tangent, Vec2(1.0, 0.0));
  EXPECT_EQ(ell().eval(std::nextafter(0.1, 1.0)).tangent, Vec2(0.0, 1.0));
}

TEST(Eval, ArcLengthConsistencyAndFrame) {
  const auto path = sigma_geometry(false);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t i = static_cast<std::size_t>(u(rng) * path.segment_count()) % path.segment_count();
    const double a = path.cumulative_arclength()[i], b = path.cumulative_arclength()[i + 1];
    double s1 = a + (b - a) * u(rng), s2 = a + (b - a) * u(rng);
    if (s1 > s2) std::swap(s1, s2);
    if (s1 == a) continue;  // s1 on the breakpoint belongs to the previous segment
    const auto p1 = path.eval(s1), p2 = path.eval(s2);
    EXPECT_NEAR((p2.position - p1.position).norm(), s2 - s1, 1e-12);
    EXPECT_EQ(p1.tangent.dot(p1.normal), 0.0);
    EXPECT_NEAR(p1.tangent.norm(), 1.0, 1e-12);
    EXPECT_GT(cross2(p1.tangent, p1.normal), 0.0);
  }
}

TEST(Angle, AxisDirections) {
  EXPECT_EQ(straight().angle(0.03), 0.0);
  const ParametricPath down({{0, 0}, {0, -0.1}});
  EXPECT_DOUBLE_EQ(down.angle(0.05), -std::numbers::pi / 2);
  const ParametricPath back({{0, 0}, {-0.1, 0}});
  EXPECT_DOUBLE_EQ(back.angle(0.05), std::numbers::pi);
}

TEST(Project, FootOfPerpendicular) {
  const auto pr = straight().project({0.05, 1e-5}, 0.05, 1e-3);
  EXPECT_DOUBLE_EQ(pr.s, 0.05);
  EXPECT_DOUBLE_EQ(pr.d, 1e-5);
}

TEST(Project, PointOnPathIsFixed) {
  const auto pr = straight().project({0.03, 0.0}, 0.0305, 1e-3);
  EXPECT_DOUBLE_EQ(pr.s, 0.03);
  EXPECT_EQ(pr.d, 0.0);
}

TEST(Project, RightSideIsNegative) {
  EXPECT_DOUBLE_EQ(straight().project({0.05, -2e-6}, 0.05, 1e-3).d, -2e-6);
}

TEST(Project, RejectsNonPositiveWindow) {
  EXPECT_THROW(straight().project({0.0, 0.0}, 0.0, 0.0), EmptyWindowError);
}

TEST(Project, WindowEndingOnBreakpointSeesNextSegment) {
  // point near the start of the vertical leg, guess before the corner
  const auto pr = ell().project({0.1 - 1e-6, 2e-4}, 0.1 - 1e-3, 1e-3);
  EXPECT_NEAR(pr.s, 0.1 + 2e-4, 1e-15);
  EXPECT_NEAR(pr.d, 1e-6, 1e-15);
}

TEST(Project, MatchesBruteForceNearSmoothSigma) {
  const auto path = sigma_geometry(false);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> us(0.0, path.length()), off(-50e-6, 50e-6), guess(-1e-3, 1e-3);
  int compared = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double s = us(rng);
    const auto pp = path.eval(s);
    const Vec2 p = pp.position + off(rng) * pp.normal + off(rng) * pp.tangent;
    const double g = s + guess(rng);
    const auto oracle = brute_force_projection(path.vertices(), p);
    if (std::abs(oracle.s - g) > 1e-3) continue;
    const auto pr = path.project(p, g, 1e-3);
    ++compared;
    EXPECT_NEAR(pr.s, oracle.s, 1e-9);
    EXPECT_NEAR(pr.d, oracle.d, 1e-12);
  }
  EXPECT_GT(compared, 900);
}

TEST(Project, MatchesBruteForceAcrossSharpCorner) {
  const auto path = sigma_geometry(true);
  const auto corners = sharp_vertices(path, 0.5);
  ASSERT_EQ(corners.size(), 2u);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> off(-50e-6, 50e-6), along(-2e-4, 2e-4);
  for (std::size_t c : corners) {
    const double sc = path.cumulative_arclength()[c];
    for (int trial = 0; trial < 500; ++trial) {
      const double s = sc + along(rng);
      const auto pp = path.eval(s);
      const Vec2 p = pp.position + Vec2(off(rng), off(rng));
      const auto oracle = brute_force_projection(path.vertices(), p);
      const auto pr = path.project(p, s, 1e-3);
      EXPECT_NEAR(pr.s, oracle.s, 1e-9);
      EXPECT_NEAR(std::abs(pr.d), std::abs(oracle.d), 1e-12);
      // in the outer wedge the foot is the vertex itself and the side is ambiguous
      if (std::abs(oracle.s - sc) > 1e-12) EXPECT_NEAR(pr.d, oracle.d, 1e-12);
    }
  }
}

TEST(Project, GlobalMatchesBruteForce) {
  const auto path = sigma_geometry(false);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> x(-0.01, 0.11), y(-0.01, 0.21);
  for (int trial = 0; trial < 300; ++trial) {
    const Vec2 p(x(rng), y(rng));
    const auto a = path.project_global(p);
    const auto b = brute_force_projection(path.vertices(), p);
    EXPECT_NEAR(a.s, b.s, 1e-12);
    EXPECT_NEAR(a.d, b.d, 1e-15);
  }
}

TEST(Project, TieGoesToLargerArcLength) {
  // symmetric V: a point on the axis is equidistant from both legs
  const ParametricPath v({{-0.01, 0.01}, {0.0, 0.0}, {0.01, 0.01}});
  const auto pr = v.project({0.0, 0.02}, 0.0141, 0.02);
  EXPECT_GT(pr.s, v.cumulative_arclength()[1]);
}

TEST(PathCsv, RoundTrip) {
  const auto path = sigma_geometry(false);
  std::stringstream ss;
  write_path_csv(path, ss);
  const auto back = read_path_csv(ss);
  ASSERT_EQ(back.vertices().size(), path.vertices().size());
  for (std::size_t i = 0; i < path.vertices().size(); ++i) EXPECT_EQ(back.vertices()[i], path.vertices()[i]);
  EXPECT_EQ(back.length(), path.length());
}

TEST(PathCsv, ZeroLengthPath) {
  std::stringstream ss("s,x,y\n0,0.5,0.5\n");
  const auto path = read_path_csv(ss);
  EXPECT_EQ(path.length(), 0.0);
  EXPECT_EQ(path.eval(1.0).position, Vec2(0.5, 0.5));
}

TEST(PathCsv, RejectsInconsistentArcLength) {
  std::stringstream ss("s,x,y\n0,0,0\n0.2,0.1,0\n");
  EXPECT_THROW(read_path_csv(ss), DegenerateInputError);
}
