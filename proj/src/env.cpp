#include "keeper/env.hpp"

#include <cmath>

namespace keeper {

namespace {

// Within one ballistic or rolling piece there are no regime changes, so the
// motion is closed-form.
BallState coast_state(const BallState& s, double tau, bool rolling) {
  if (!rolling) return step_ball(s, tau);
  BallState r = s;
  r.position.x() += r.velocity.x() * tau;
  r.position.y() += r.velocity.y() * tau;
  r.time += tau;
  return r;
}

}  // namespace

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Saved: return "saved";
    case Outcome::Goal: return "goal";
    case Outcome::Timeout: return "timeout";
    case Outcome::RobotFell: return "robot_fell";
  }
  return "unknown";
}

Episode::Episode(const EpisodeConfig& cfg, std::uint64_t seed, bool record)
    : cfg_(cfg), rng_(seed), record_(record), history_(cfg.ground) {
  if (!cfg_.noise_enabled) {
    cfg_.skills.sidestep.tracking_noise_std = 0.0;
    cfg_.skills.dive.tracking_noise_std = 0.0;
    cfg_.skills.jump.tracking_noise_std = 0.0;
  }
  noise_std_ = cfg_.noise_enabled ? cfg_.sensor.noise_std : 0.0;

  // Fixed draw order so a seed pins the whole episode: shot, latency,
  // release offset. The latency draw happens even in noiseless mode to keep
  // shots and release times mode-independent.
  shot_ = sample_shot(rng_, cfg_.shots);
  const double delay_draw =
      rng_.uniform(cfg_.sensor.delay_min, cfg_.sensor.delay_max);
  delay_ = cfg_.noise_enabled ? delay_draw : 0.0;
  const double release_draw = rng_.uniform(0.0, cfg_.release_max);
  const long release_idx = std::lround(release_draw / cfg_.control_dt);
  release_time_ = static_cast<double>(release_idx) * cfg_.control_dt;

  launch_state_ = solve_launch(shot_);
  launch_state_.time = release_time_;
  history_.push(launch_state_);
  ball_.position = shot_.launch_position;
  ball_.velocity = Vec3::Zero();
  ball_.time = 0.0;

  robot_ = nominal_robot_state(cfg_.arena.robot_start_x);
  exec_ = begin_skill(robot_, SkillKind::Stand,
                      BezierCurve::constant(robot_.end_effector,
                                            cfg_.skills.duration),
                      0.0, cfg_.skills);

  // Reset-time measurement; the short histories back-fill with it.
  BallObservation first;
  first.position = shot_.launch_position + noise_std_ * rng_.gaussian3();
  first.timestamp = 0.0;
  stream_.push_back(first);
  obs_.ball_history.assign(6, first.position);
  obs_.robot_history.assign(
      6, RobotFrame{robot_.base_rpy, robot_.base_position,
                    robot_.end_effector});
  obs_.previous_action = stand_action(cfg_.n_skills);
  obs_.phase = 0.0;

  result_.shot = shot_;
  result_.release_time = release_time_;
  result_.sensor_delay = delay_;

  if (record_) {
    SubstepRecord r;
    r.time = 0.0;
    r.ball_position = ball_.position;
    r.ball_velocity = ball_.velocity;
    r.observed_position = first.position;
    r.base_position = robot_.base_position;
    r.base_rpy = robot_.base_rpy;
    r.end_effector = robot_.end_effector;
    r.phase = 0.0;
    r.skill = SkillKind::Stand;
    r.fallen = false;
    substep_records_.push_back(r);
  }
}

double Episode::time() const { return substeps_total_ * cfg_.control_dt; }

const EpisodeResult& Episode::result() const {
  if (!done_) throw std::logic_error("episode still running");
  return result_;
}

StepResult Episode::step(const DecodedPlan& plan, const PlannerAction& raw) {
  if (done_) throw std::logic_error("Episode::step after termination");
  if (raw.skill_probs.size() != cfg_.n_skills || raw.deltas.size() != 12) {
    throw std::domain_error("planner action width mismatch");
  }

  bool latched = false;
  const BeginError be = can_begin(&exec_, robot_);
  if (be == BeginError::None) {
    exec_ = begin_skill(robot_, plan.skill, plan.curve, time(), cfg_.skills);
  } else {
    // Mid-commitment. Repeating the active skill or decoding Stand simply
    // continues the execution; a conflicting dynamic skill is either ignored
    // (strict latch) or physically infeasible and topples the robot.
    latched = plan.skill != exec_.skill;
    if (!cfg_.strict_latch && latched && is_dynamic(plan.skill)) {
      robot_.fallen = true;
    }
  }
  if (robot_.fallen) {
    resolve_ball_alone();
    finish(Outcome::RobotFell, time());
  }

  for (int j = 0; j < cfg_.substeps_per_decision && !done_; ++j) {
    run_substep();
  }

  const RewardTerms terms = decision_reward(raw);
  ++steps_;
  result_.episode_return += terms.total;
  result_.steps_done = steps_;
  result_.active_skills.push_back(exec_.skill);
  if (terms.gate > 0.0 && !result_.first_gate_speed) {
    result_.first_gate_speed = ball_.velocity.norm();
  }
  if (record_) {
    decision_records_.push_back(
        DecisionRecord{steps_ - 1, plan.skill, exec_.skill, latched, terms});
  }

  if (!done_ && steps_ >= cfg_.planner_steps) {
    finish(entered_goal_ ? Outcome::Goal : Outcome::Timeout, time());
  }

  obs_.previous_action = raw;
  obs_.phase = exec_.phase().value();
  return StepResult{terms.total, done_, terms};
}

void Episode::run_substep() {
  // The robot moves first; the ball then collides against the updated pose.
  step_execution(exec_, robot_, cfg_.control_dt, rng_, cfg_.skills);
  if (robot_.fallen) {
    resolve_ball_alone();
    finish(Outcome::RobotFell, (substeps_total_ + 1) * cfg_.control_dt);
    return;
  }

  contact_this_substep_ = false;
  const double t1 = (substeps_total_ + 1) * cfg_.control_dt;
  advance_ball(t1);
  ++substeps_total_;
  if (done_) return;

  sample_sensor();
  push_robot_frame();

  if (record_) {
    SubstepRecord r;
    r.time = time();
    r.ball_position = ball_.position;
    r.ball_velocity = ball_.velocity;
    r.observed_position = stream_.back().position;
    r.base_position = robot_.base_position;
    r.base_rpy = robot_.base_rpy;
    r.end_effector = robot_.end_effector;
    r.phase = exec_.phase().value();
    r.skill = exec_.skill;
    r.fallen = robot_.fallen;
    substep_records_.push_back(r);
  }

  // A ball stopped in play keeps the episode (and the reward stream) running
  // to the horizon; the save settles early only once the ball is moving away
  // beyond any hope of threatening the goal again.
  if (!entered_goal_ && ball_.velocity.x() > 0.0 &&
      ball_.position.x() > cfg_.arena.clear_x) {
    finish(Outcome::Saved, time());
  }
}

void Episode::advance_ball(double t1) {
  if (done_) return;
  if (t1 <= release_time_) {
    ball_.time = t1;
    return;
  }
  BallState s = ball_;
  if (s.time <= release_time_) s = launch_state_;

  double remaining = t1 - s.time;
  // Event-ordered integration: each iteration peels off the earliest of
  // {robot contact, goal-plane crossing, ground bounce} or finishes the
  // window. Restitution kills bounce cascades quickly; the guard only
  // protects against degenerate float stalls.
  for (int guard = 0; guard < 256 && remaining > 1e-12; ++guard) {
    const bool rolling = is_rolling(s, cfg_.ground);
    double piece = remaining;
    bool bounce_end = false;
    if (!rolling) {
      if (auto imp = ground_impact_time(s, remaining, cfg_.ground)) {
        piece = *imp;
        bounce_end = true;
      }
    }

    std::optional<double> t_hit;
    if (!contact_this_substep_ && !robot_.fallen) {
      t_hit = contact_entry_time(s, piece, rolling);
    }
    std::optional<double> t_cross;
    if (!crossed_plane_) t_cross = plane_crossing_time(s, 0.0, piece);

    if (t_hit && (!t_cross || *t_hit <= *t_cross)) {
      s = coast_state(s, *t_hit, rolling);
      apply_contact(s);
      // The velocity kink must be visible to delayed sensor queries.
      history_.push(s);
      contact_this_substep_ = true;
      ball_contacted_ = true;
      remaining = t1 - s.time;
      continue;
    }

    if (t_cross) {
      s = coast_state(s, *t_cross, rolling);
      crossed_plane_ = true;
      const double y = s.position.y();
      const double z = s.position.z();
      const bool inside =
          std::abs(y) <= cfg_.arena.goal_half_width && z <= cfg_.arena.goal_height;
      if (inside) {
        entered_goal_ = true;
        crossing_ = Eigen::Vector2d(y, z);
        crossing_time_ = s.time;
        if (cfg_.goal_termination) {
          ball_ = s;
          finish(Outcome::Goal, s.time);
          return;
        }
      } else {
        // Wide or high of the mouth and already behind the plane: the shot
        // can never score, so the save settles regardless of the
        // goal-termination ablation flag.
        ball_ = s;
        finish(Outcome::Saved, s.time);
        return;
      }
      remaining = t1 - s.time;
      continue;
    }

    if (bounce_end) {
      s = apply_ground_bounce(step_ball(s, piece), cfg_.ground);
    } else {
      s = coast_state(s, piece, rolling);
    }
    remaining = t1 - s.time;
  }
  ball_ = s;
  ball_.time = t1;
  ball_in_contact_volume_ = inside_contact_volume(ball_.position);
}

bool Episode::inside_contact_volume(const Vec3& p) const {
  const Vec3& e = robot_.end_effector;
  const Vec3& c = robot_.base_position;
  const Vec3 h = kTrunkHalfExtents + Vec3::Constant(cfg_.ground.ball_radius);
  if ((p - e).norm() <= cfg_.contact.radius) return true;
  return std::abs(p.x() - c.x()) <= h.x() &&
         std::abs(p.y() - c.y()) <= h.y() && std::abs(p.z() - c.z()) <= h.z();
}

std::optional<double> Episode::contact_entry_time(const BallState& s,
                                                  double piece,
                                                  bool rolling) const {
  if (piece <= 0.0) return std::nullopt;
  const Vec3& e = robot_.end_effector;
  const Vec3& c = robot_.base_position;
  const Vec3 h =
      kTrunkHalfExtents + Vec3::Constant(cfg_.ground.ball_radius);
  const double r = cfg_.contact.radius;

  auto inside = [&](const Vec3& p) { return inside_contact_volume(p); };

  // The parabola is near-linear over 1/180 s (max sagitta ~4e-5 m), so entry
  // roots on chord segments are accurate well below the contact scale.
  constexpr int kSegments = 6;
  const double seg = piece / kSegments;
  Vec3 prev = s.position;
  if (inside(prev)) {
    // The robot moves before the ball, so the volume can sweep over a ball
    // between substeps; the chord test cannot see that, so a fresh overlap is
    // an immediate hit. A lingering overlap (resting or just-deflected ball
    // still on the boundary) is already resolved and must not retrigger.
    if (ball_in_contact_volume_) return std::nullopt;
    return 0.0;
  }

  for (int i = 0; i < kSegments; ++i) {
    const Vec3 next = coast_state(s, seg * (i + 1), rolling).position;
    const Vec3 d = next - prev;
    const double a = d.squaredNorm();
    double best = 2.0;  // parameter along the chord, >1 means none

    if (a > 0.0) {
      // Sphere around the end-effector.
      const Vec3 f = prev - e;
      const double b = 2.0 * f.dot(d);
      const double cc = f.squaredNorm() - r * r;
      const double disc = b * b - 4.0 * a * cc;
      if (disc >= 0.0) {
        const double u = (-b - std::sqrt(disc)) / (2.0 * a);
        if (u >= 0.0 && u <= 1.0) best = std::min(best, u);
      }
      // Inflated trunk box via slab intersection.
      double u_in = 0.0;
      double u_out = 1.0;
      bool ok = true;
      for (int ax = 0; ax < 3 && ok; ++ax) {
        const double lo = c(ax) - h(ax);
        const double hi = c(ax) + h(ax);
        const double p0 = prev(ax);
        const double dd = d(ax);
        if (std::abs(dd) < 1e-15) {
          ok = p0 >= lo && p0 <= hi;
        } else {
          double u1 = (lo - p0) / dd;
          double u2 = (hi - p0) / dd;
          if (u1 > u2) std::swap(u1, u2);
          u_in = std::max(u_in, u1);
          u_out = std::min(u_out, u2);
          ok = u_in <= u_out;
        }
      }
      if (ok && u_in > 0.0) best = std::min(best, u_in);
    }

    if (best <= 1.0) return seg * i + best * seg;
    prev = next;
    if (inside(prev)) return seg * (i + 1);  // grazing entry at the joint
  }
  return std::nullopt;
}

void Episode::apply_contact(BallState& s) const {
  const double speed = s.velocity.norm();
  if (speed <= cfg_.contact.stop_speed_max) {
    s.velocity.setZero();
  } else {
    s.velocity.x() = -cfg_.contact.restitution * s.velocity.x();
    s.velocity.y() *= cfg_.contact.tangential_damping;
    s.velocity.z() *= cfg_.contact.tangential_damping;
  }
}

void Episode::sample_sensor() {
  const double t = time();
  const double tq = t - delay_;
  Vec3 truth;
  if (tq <= release_time_) {
    truth = shot_.launch_position;  // still held by the shooter
  } else {
    truth = history_.at(tq).position;
  }
  BallObservation obs;
  obs.position = truth + noise_std_ * rng_.gaussian3();
  obs.timestamp = t;
  stream_.push_back(obs);
  obs_.ball_history.erase(obs_.ball_history.begin());
  obs_.ball_history.push_back(obs.position);
}

void Episode::push_robot_frame() {
  obs_.robot_history.erase(obs_.robot_history.begin());
  obs_.robot_history.push_back(
      RobotFrame{robot_.base_rpy, robot_.base_position, robot_.end_effector});
}

void Episode::resolve_ball_alone() {
  // The keeper is out of the play; whether the shot scores is decided by the
  // ball alone over the rest of the episode window.
  if (crossed_plane_) return;
  BallState s = ball_.time <= release_time_ ? launch_state_ : ball_;
  double remaining = cfg_.horizon_seconds() - s.time;
  for (int guard = 0; guard < 256 && remaining > 1e-12; ++guard) {
    const bool rolling = is_rolling(s, cfg_.ground);
    double piece = remaining;
    bool bounce_end = false;
    if (!rolling) {
      if (auto imp = ground_impact_time(s, remaining, cfg_.ground)) {
        piece = *imp;
        bounce_end = true;
      }
    }
    if (auto t_cross = plane_crossing_time(s, 0.0, piece)) {
      s = coast_state(s, *t_cross, rolling);
      crossed_plane_ = true;
      const bool inside = std::abs(s.position.y()) <= cfg_.arena.goal_half_width &&
                          s.position.z() <= cfg_.arena.goal_height;
      if (inside) {
        entered_goal_ = true;
        crossing_ = Eigen::Vector2d(s.position.y(), s.position.z());
        crossing_time_ = s.time;
      }
      return;
    }
    if (bounce_end) {
      s = apply_ground_bounce(step_ball(s, piece), cfg_.ground);
    } else {
      s = coast_state(s, piece, rolling);
    }
    remaining = cfg_.horizon_seconds() - s.time;
  }
}

void Episode::finish(Outcome outcome, double at_time) {
  done_ = true;
  result_.outcome = outcome;
  result_.saved = !entered_goal_;
  result_.goal_crossing = crossing_;
  result_.crossing_time = crossing_time_;
  result_.end_time = at_time;
  result_.ball_contacted = ball_contacted_;
}

RewardTerms Episode::decision_reward(const PlannerAction& raw) const {
  RewardTerms t;
  const Eigen::VectorXd ball_pos = ball_.position;
  const Eigen::VectorXd effector = robot_.end_effector;
  const double dist = (ball_.position - robot_.end_effector).norm();
  t.gate = dist <= cfg_.reward.gate_distance ? 1.0 : 0.0;
  t.stop = ball_.velocity.norm() <= cfg_.reward.stop_speed ? 1.0 : 0.0;
  t.proximity = reward_kernel(effector, ball_pos, cfg_.reward.rho_position);
  const Eigen::VectorXd on_curve = evaluate(exec_.curve, exec_.phase());
  t.curve = reward_kernel(on_curve, ball_pos, cfg_.reward.rho_position);
  t.regularizer = reward_kernel(raw.deltas, Eigen::VectorXd::Zero(12),
                                cfg_.reward.rho_alpha);
  t.total = t.gate * (cfg_.reward.w_stop * t.stop +
                      cfg_.reward.w_proximity * t.proximity +
                      cfg_.reward.w_curve * t.curve +
                      cfg_.reward.w_regularizer * t.regularizer);
  return t;
}

}  // namespace keeper
