#include "keeper/curves.hpp"

#include <cmath>
#include <stdexcept>

namespace keeper {

namespace {

void check_duration(const BezierCurve& c) {
  if (!(c.duration > 0.0)) {
    throw std::domain_error("BezierCurve: duration must be positive");
  }
}

// Bernstein basis of degree 4 at t.
std::array<double, 5> bernstein4(double t) {
  const double s = 1.0 - t;
  return {s * s * s * s, 4.0 * s * s * s * t, 6.0 * s * s * t * t,
          4.0 * s * t * t * t, t * t * t * t};
}

}  // namespace

Phase::Phase(double t) : t_(t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::domain_error("Phase: value outside [0, 1]");
  }
}

BezierCurve BezierCurve::constant(const Vec3& p, double duration) {
  BezierCurve c;
  c.control_points.fill(p);
  c.duration = duration;
  return c;
}

Vec3 evaluate(const BezierCurve& c, Phase t) {
  check_duration(c);
  const auto b = bernstein4(t.value());
  Vec3 p = Vec3::Zero();
  for (int i = 0; i < 5; ++i) p += b[i] * c.control_points[i];
  return p;
}

Vec3 derivative(const BezierCurve& c, Phase t) {
  check_duration(c);
  // Hodograph: B'(t) = 4 * sum_i b_{i,3}(t) (P_{i+1} - P_i), then scale by
  // 1/duration to express the rate in real time.
  const double u = t.value();
  const double s = 1.0 - u;
  const std::array<double, 4> b3 = {s * s * s, 3.0 * s * s * u, 3.0 * s * u * u,
                                    u * u * u};
  Vec3 v = Vec3::Zero();
  for (int i = 0; i < 4; ++i) {
    v += b3[i] * (c.control_points[i + 1] - c.control_points[i]);
  }
  return 4.0 / c.duration * v;
}

BezierCurve fit_through_point(const Vec3& start, const Vec3& target,
                              Phase t_hit, double duration) {
  if (!(duration > 0.0)) {
    throw std::domain_error("fit_through_point: duration must be positive");
  }
  const double t = t_hit.value();
  if ((start.array() == target.array()).all()) {
    return BezierCurve::constant(start, duration);
  }
  if (t == 0.0) {
    throw std::domain_error(
        "fit_through_point: cannot pass through a distinct target at phase 0");
  }

  BezierCurve c;
  c.duration = duration;
  c.control_points[0] = start;
  c.control_points[1] = start + 0.25 * (target - start);
  c.control_points[3] = target;
  c.control_points[4] = target;
  if (t == 1.0) {
    // Through-point constraint degenerates to the endpoint; any interior P2
    // works, take the midpoint for a smooth monotone sweep.
    c.control_points[2] = 0.5 * (start + target);
  } else {
    const auto b = bernstein4(t);
    // b[2] = 6 t^2 (1-t)^2 > 0 on (0,1), so the solve is well posed.
    c.control_points[2] = (target - b[0] * c.control_points[0] -
                           b[1] * c.control_points[1] - (b[3] + b[4]) * target) /
                          b[2];
  }
  return c;
}

BezierCurve mirror_y(const BezierCurve& c) {
  BezierCurve m = c;
  for (auto& p : m.control_points) p.y() = -p.y();
  return m;
}

}  // namespace keeper
