#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <vector>

#include "keeper/curves.hpp"
#include "keeper/rng.hpp"

namespace keeper {

// World frame: goal plane at x = 0 with +x toward the field, y lateral,
// z up. Gravity acts along -z.
inline constexpr double kGravity = 9.81;

struct BallState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double time = 0.0;
};

// A shot: launch point in the field, aim point on the goal plane (y, z),
// and the magnitude of the horizontal (x, y) velocity.
struct ShotSpec {
  Vec3 launch_position = Vec3::Zero();
  Eigen::Vector2d target_on_goal = Eigen::Vector2d::Zero();
  double planar_speed = 0.0;
};

struct BallObservation {
  Vec3 position = Vec3::Zero();
  double timestamp = 0.0;
};

struct ShotDistribution {
  std::array<double, 2> launch_x{3.5, 4.5};
  std::array<double, 2> launch_y{-1.0, 1.0};
  std::array<double, 2> launch_z{0.1, 0.5};
  std::array<double, 2> target_y{-0.75, 0.75};  // goal width 1.5 m
  std::array<double, 2> target_z{0.0, 0.9};     // goal height 0.9 m
  std::array<double, 2> planar_speed{4.0, 8.0};
};

// Ground contact model: restitution bounce with tangential damping; bounces
// slower than settle_speed transition to rolling (z pinned at ball_radius,
// vz = 0). Rolling resistance is not modeled, so ground balls stay playable.
struct GroundModel {
  double ball_radius = 0.09;
  double restitution = 0.5;
  double tangential_retention = 0.7;  // vx, vy multiplier at each bounce
  double settle_speed = 0.3;          // |vz| below this rests the ball
};

// Closed-form ballistic update, no ground: p' = p + v dt + g dt^2/2.
BallState step_ball(const BallState& s, double dt);

// True when the ball is resting on (rolling along) the ground.
bool is_rolling(const BallState& s, const GroundModel& gm);

// Time until the ball's underside reaches the ground within [0, max_dt],
// if any. Rolling balls never impact.
std::optional<double> ground_impact_time(const BallState& s, double max_dt,
                                         const GroundModel& gm);

// Applies the bounce (or settles into rolling) at an impact instant.
BallState apply_ground_bounce(const BallState& s, const GroundModel& gm);

// Ballistic update with ground events resolved inside dt. Optionally reports
// the absolute times of bounce events.
BallState step_ball_grounded(const BallState& s, double dt,
                             const GroundModel& gm,
                             std::vector<double>* bounce_times = nullptr);

// Time until the ball crosses the vertical plane x = plane_x within
// (0, max_dt], if any. Horizontal motion is unaccelerated so this is exact.
std::optional<double> plane_crossing_time(const BallState& s, double plane_x,
                                          double max_dt);

// Initial state realizing the shot: horizontal velocity of magnitude
// planar_speed aimed from the launch point at (x=0, y=target), and the
// vertical speed solved so the arc passes through the target height at the
// horizontal arrival time. Throws std::domain_error when the launch point is
// already on the goal line (zero planar distance).
BallState solve_launch(const ShotSpec& shot);

// Horizontal travel time implied by the spec (planar distance / speed).
double flight_time(const ShotSpec& shot);

ShotSpec sample_shot(Rng& rng, const ShotDistribution& dist);

// Time-indexed record of true ball states. Samples must be pushed in
// nondecreasing time order; `at` propagates ballistically (with ground
// handling) from the latest sample at or before the query, and clamps to the
// earliest sample for queries that predate the history.
class BallHistory {
 public:
  explicit BallHistory(const GroundModel& gm) : gm_(gm) {}

  void push(const BallState& s);
  BallState at(double t) const;
  bool empty() const { return samples_.empty(); }

 private:
  GroundModel gm_;
  std::vector<BallState> samples_;
};

struct SensorModel {
  double noise_std = 0.05;  // meters, per axis
  double delay = 0.09;      // seconds, constant within an episode
};

// Delayed, noisy position measurement stamped with the query time.
BallObservation observe_ball(const BallHistory& history, double now,
                             const SensorModel& sensor, Rng& rng);

}  // namespace keeper
