#pragma once

#include <Eigen/Core>
#include <array>

namespace keeper {

using Vec3 = Eigen::Vector3d;

// Normalized time within a skill execution. Invariant: value in [0, 1].
class Phase {
 public:
  Phase() = default;
  explicit Phase(double t);  // throws std::domain_error outside [0, 1]
  double value() const { return t_; }

 private:
  double t_ = 0.0;
};

// Degree-4 Bezier curve in 3D with a fixed real-time duration in seconds.
// Exactly five control points; the curve maps phase [0,1] to a point, and
// real time tau in [0, duration] corresponds to phase tau/duration.
struct BezierCurve {
  std::array<Vec3, 5> control_points{};
  double duration = 0.5;

  static BezierCurve constant(const Vec3& p, double duration);
};

// Position at phase t. Endpoints interpolate exactly: B(0)=P0, B(1)=P4.
Vec3 evaluate(const BezierCurve& c, Phase t);

// Velocity in m/s with respect to real time (hodograph scaled by 1/duration).
Vec3 derivative(const BezierCurve& c, Phase t);

// Builds a curve from `start` that passes through `target` at phase t_hit and
// ends at `target` (P3 = P4 = target). P1 leads a quarter of the way out of
// the start; P2 is solved from the through-point constraint. Postcondition:
// |evaluate(c, t_hit) - target| <= 1e-9.
// t_hit = 0 with target != start is infeasible and throws; start == target
// yields the constant curve for any t_hit.
BezierCurve fit_through_point(const Vec3& start, const Vec3& target,
                              Phase t_hit, double duration);

// y-negated copy (used by symmetry checks and mirrored-skill tooling).
BezierCurve mirror_y(const BezierCurve& c);

}  // namespace keeper
