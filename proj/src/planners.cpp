#include "keeper/planners.hpp"

#include <algorithm>
#include <stdexcept>

namespace keeper {

int SkillTable::index_of(SkillKind k) const {
  for (size_t i = 0; i < kinds.size(); ++i) {
    if (kinds[i] == k) return static_cast<int>(i);
  }
  return -1;
}

SkillTable SkillTable::from_names(const std::vector<std::string>& names) {
  SkillTable t;
  if (names.empty() ||
      (names.size() == 1 && (names[0] == "all" || names[0].empty()))) {
    return t;
  }
  t.kinds = {SkillKind::Stand};
  // Canonical order regardless of the order given.
  for (SkillKind k : {SkillKind::Sidestep, SkillKind::Dive, SkillKind::Jump}) {
    for (const auto& name : names) {
      if (skill_from_name(name) == k) {
        t.kinds.push_back(k);
        break;
      }
    }
  }
  if (t.kinds.size() < 2) {
    throw std::invalid_argument("skill table needs at least one dynamic skill");
  }
  return t;
}

std::string SkillTable::names_csv() const {
  std::string out;
  for (size_t i = 1; i < kinds.size(); ++i) {
    if (!out.empty()) out += ",";
    out += skill_name(kinds[i]);
  }
  return out;
}

PlannerAction stand_action(int table_size) {
  PlannerAction a;
  a.skill_probs = VectorXd::Zero(table_size);
  a.skill_probs(0) = 1.0;
  a.deltas = VectorXd::Zero(12);
  return a;
}

VectorXd encode_observation(const PlannerObservation& obs,
                            const ObservationLayout& layout) {
  if (static_cast<int>(obs.ball_history.size()) != layout.ball_frames ||
      static_cast<int>(obs.robot_history.size()) != layout.robot_frames ||
      obs.previous_action.skill_probs.size() != layout.n_skills ||
      obs.previous_action.deltas.size() != layout.n_cont) {
    throw std::domain_error("encode_observation: layout mismatch");
  }
  VectorXd x(layout.dim());
  int at = 0;
  for (const Vec3& p : obs.ball_history) {
    x.segment<3>(at) = p;
    at += 3;
  }
  for (const RobotFrame& f : obs.robot_history) {
    x.segment<3>(at) = f.rpy;
    x.segment<3>(at + 3) = f.base;
    x.segment<3>(at + 6) = f.end_effector;
    at += 9;
  }
  x.segment(at, layout.n_skills) = obs.previous_action.skill_probs;
  at += layout.n_skills;
  x.segment(at, layout.n_cont) = obs.previous_action.deltas;
  at += layout.n_cont;
  x(at) = obs.phase;
  return x;
}

const std::array<Vec3, 4>& DecodeConfig::tail(SkillKind k) const {
  switch (k) {
    case SkillKind::Sidestep: return sidestep_tail;
    case SkillKind::Dive: return dive_tail;
    case SkillKind::Jump: return jump_tail;
    default: throw std::invalid_argument("Stand has no nominal tail");
  }
}

namespace {

Vec3 box_clamp(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  return p.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

DecodedPlan decode_action(const PlannerAction& action, const SkillTable& table,
                          const DecodeConfig& cfg) {
  if (action.skill_probs.size() != table.size() ||
      action.deltas.size() != 12) {
    throw std::domain_error("decode_action: action shape mismatch");
  }
  // First maximum wins: strict > keeps the lowest index on ties.
  int best = 0;
  for (int k = 1; k < table.size(); ++k) {
    if (action.skill_probs(k) > action.skill_probs(best)) best = k;
  }
  DecodedPlan plan;
  plan.skill = table.kinds[best];
  if (plan.skill == SkillKind::Stand) {
    plan.curve = BezierCurve::constant(cfg.nominal_start, cfg.duration);
    return plan;
  }
  const auto& tail = cfg.tail(plan.skill);
  plan.curve.duration = cfg.duration;
  plan.curve.control_points[0] = cfg.nominal_start;
  for (int i = 0; i < 4; ++i) {
    const Vec3 delta{action.deltas(3 * i), action.deltas(3 * i + 1),
                     action.deltas(3 * i + 2)};
    plan.curve.control_points[i + 1] = box_clamp(
        tail[i] + cfg.delta_scale.cwiseProduct(delta), cfg.workspace_min,
        cfg.workspace_max);
  }
  return plan;
}

DecodedPlan model_based_plan(const BallBelief& belief, const RobotState& robot,
                             const SkillSet& skills, const ModelBasedConfig& cfg,
                             double ball_radius) {
  DecodedPlan hold;
  hold.skill = SkillKind::Stand;
  hold.curve = BezierCurve::constant(robot.end_effector, skills.duration);

  const auto hit =
      predict_interception(belief, cfg.predict_horizon, cfg.reach_plane_x);
  if (!hit || hit->time_to_arrival > cfg.commit_horizon) return hold;

  struct Candidate {
    Vec3 point;
    SkillKind skill;
    double distance;
    double tta;
  };
  auto assess = [&](const Interception& c) {
    Vec3 p = c.point;
    p.z() = std::max(p.z(), ball_radius);
    SkillKind k;
    if (p.z() < skills.sidestep.z_max && std::abs(p.y()) <= cfg.sidestep_abs_y) {
      k = SkillKind::Sidestep;
    } else if (p.z() <= skills.dive.z_max) {
      k = SkillKind::Dive;
    } else {
      k = SkillKind::Jump;
    }
    double d = envelope_distance(p, k, skills);
    if (d > cfg.contact_reach) {
      // The height cascade can send a tall corner ball to the narrow jump
      // envelope when the wider dive envelope ends closer below it. Once the
      // first choice is out of reach, take whichever envelope comes nearest.
      for (SkillKind alt :
           {SkillKind::Sidestep, SkillKind::Dive, SkillKind::Jump}) {
        const double da = envelope_distance(p, alt, skills);
        if (da < d) {
          k = alt;
          d = da;
        }
      }
    }
    return Candidate{p, k, d, c.time_to_arrival};
  };

  Candidate best = assess(*hit);
  // A ball that crosses the nominal reach plane outside every envelope (a lob
  // still descending, or a fast corner shot) often meets a deeper plane lower
  // and nearer the hands. Scan toward the goal line and take the shallowest
  // reachable crossing; committing is still gated by the nominal plane above.
  if (best.distance > cfg.contact_reach) {
    constexpr int kFallbackPlanes = 4;
    for (int k = 1; k <= kFallbackPlanes; ++k) {
      const double frac = static_cast<double>(k) / kFallbackPlanes;
      const double plane =
          cfg.reach_plane_x + frac * (cfg.reach_plane_min - cfg.reach_plane_x);
      const auto deep = predict_interception(belief, cfg.predict_horizon, plane);
      if (!deep) continue;
      const Candidate cand = assess(*deep);
      if (cand.distance < best.distance) best = cand;
      if (best.distance <= cfg.contact_reach) break;
    }
  }

  DecodedPlan plan;
  plan.skill = best.skill;
  const Vec3 target = clamp_to_envelope(best.point, plan.skill, skills);
  const double hit_seconds =
      std::clamp(best.tta, cfg.min_hit_time, skills.duration);
  plan.curve = fit_through_point(robot.end_effector, target,
                                 Phase(hit_seconds / skills.duration),
                                 skills.duration);
  return plan;
}

}  // namespace keeper
