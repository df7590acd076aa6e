#include "keeper/ball.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace keeper {

namespace {
constexpr double kHalfG = 0.5 * kGravity;
}

BallState step_ball(const BallState& s, double dt) {
  BallState n;
  n.position = s.position + dt * s.velocity;
  n.position.z() -= kHalfG * dt * dt;
  n.velocity = s.velocity;
  n.velocity.z() -= kGravity * dt;
  n.time = s.time + dt;
  return n;
}

bool is_rolling(const BallState& s, const GroundModel& gm) {
  return s.position.z() <= gm.ball_radius + 1e-9 && s.velocity.z() == 0.0;
}

std::optional<double> ground_impact_time(const BallState& s, double max_dt,
                                         const GroundModel& gm) {
  if (is_rolling(s, gm)) return std::nullopt;
  // h(t) = h0 + vz t - g t^2 / 2 with h = z - radius; earliest root in
  // (0, max_dt] with downward motion.
  const double h0 = s.position.z() - gm.ball_radius;
  const double vz = s.velocity.z();
  // t^2 * (g/2) - vz t - h0 = 0
  const double a = kHalfG;
  const double disc = vz * vz + 4.0 * a * h0;
  if (disc < 0.0) return std::nullopt;
  const double root = (vz + std::sqrt(disc)) / (2.0 * a);
  if (root <= 0.0 || root > max_dt) {
    // Already at/below the surface and moving down: immediate impact.
    if (h0 <= 0.0 && vz < 0.0) return 0.0;
    return std::nullopt;
  }
  return root;
}

BallState apply_ground_bounce(const BallState& s, const GroundModel& gm) {
  BallState n = s;
  n.position.z() = gm.ball_radius;
  n.velocity.x() *= gm.tangential_retention;
  n.velocity.y() *= gm.tangential_retention;
  const double vz_out = -gm.restitution * n.velocity.z();
  n.velocity.z() = vz_out < gm.settle_speed ? 0.0 : vz_out;
  return n;
}

BallState step_ball_grounded(const BallState& s, double dt,
                             const GroundModel& gm,
                             std::vector<double>* bounce_times) {
  BallState cur = s;
  double remaining = dt;
  // Restitution < 1 plus the settle threshold terminates this quickly; the
  // cap only guards pathological configs.
  for (int guard = 0; guard < 64 && remaining > 0.0; ++guard) {
    if (is_rolling(cur, gm)) {
      cur.position.x() += cur.velocity.x() * remaining;
      cur.position.y() += cur.velocity.y() * remaining;
      cur.time += remaining;
      return cur;
    }
    const auto hit = ground_impact_time(cur, remaining, gm);
    if (!hit) {
      return step_ball(cur, remaining);
    }
    cur = apply_ground_bounce(step_ball(cur, *hit), gm);
    if (bounce_times) bounce_times->push_back(cur.time);
    remaining -= *hit;
  }
  return cur;
}

std::optional<double> plane_crossing_time(const BallState& s, double plane_x,
                                          double max_dt) {
  const double dx = plane_x - s.position.x();
  if (s.velocity.x() == 0.0) return std::nullopt;
  const double t = dx / s.velocity.x();
  if (t <= 0.0 || t > max_dt) return std::nullopt;
  return t;
}

BallState solve_launch(const ShotSpec& shot) {
  const Eigen::Vector2d planar_delta(-shot.launch_position.x(),
                                     shot.target_on_goal.x() -
                                         shot.launch_position.y());
  const double dist = planar_delta.norm();
  if (dist <= 0.0) {
    throw std::domain_error("solve_launch: launch point is on the goal line");
  }
  if (!(shot.planar_speed > 0.0)) {
    throw std::domain_error("solve_launch: planar speed must be positive");
  }
  const double tf = dist / shot.planar_speed;
  const Eigen::Vector2d v_xy = shot.planar_speed / dist * planar_delta;
  const double vz =
      (shot.target_on_goal.y() - shot.launch_position.z() + kHalfG * tf * tf) /
      tf;
  BallState s;
  s.position = shot.launch_position;
  s.velocity = {v_xy.x(), v_xy.y(), vz};
  s.time = 0.0;
  return s;
}

double flight_time(const ShotSpec& shot) {
  const Eigen::Vector2d planar_delta(-shot.launch_position.x(),
                                     shot.target_on_goal.x() -
                                         shot.launch_position.y());
  return planar_delta.norm() / shot.planar_speed;
}

ShotSpec sample_shot(Rng& rng, const ShotDistribution& dist) {
  // Fixed draw order; reordering would silently re-pair every seeded shot set.
  ShotSpec shot;
  shot.launch_position.x() = rng.uniform(dist.launch_x[0], dist.launch_x[1]);
  shot.launch_position.y() = rng.uniform(dist.launch_y[0], dist.launch_y[1]);
  shot.launch_position.z() = rng.uniform(dist.launch_z[0], dist.launch_z[1]);
  shot.target_on_goal.x() = rng.uniform(dist.target_y[0], dist.target_y[1]);
  shot.target_on_goal.y() = rng.uniform(dist.target_z[0], dist.target_z[1]);
  shot.planar_speed = rng.uniform(dist.planar_speed[0], dist.planar_speed[1]);
  return shot;
}

void BallHistory::push(const BallState& s) {
  if (!samples_.empty() && s.time < samples_.back().time - 1e-12) {
    throw std::invalid_argument("BallHistory: samples must be time ordered");
  }
  samples_.push_back(s);
}

BallState BallHistory::at(double t) const {
  if (samples_.empty()) {
    throw std::logic_error("BallHistory: empty");
  }
  if (t <= samples_.front().time) return samples_.front();
  // Latest sample with time <= t.
  auto it = std::upper_bound(
      samples_.begin(), samples_.end(), t,
      [](double q, const BallState& s) { return q < s.time; });
  const BallState& base = *(it - 1);
  const double gap = t - base.time;
  if (gap <= 0.0) return base;
  return step_ball_grounded(base, gap, gm_);
}

BallObservation observe_ball(const BallHistory& history, double now,
                             const SensorModel& sensor, Rng& rng) {
  const BallState delayed = history.at(now - sensor.delay);
  BallObservation obs;
  obs.position = delayed.position + sensor.noise_std * rng.gaussian3();
  obs.timestamp = now;
  return obs;
}

}  // namespace keeper
