#pragma once

#include <string>
#include <vector>

#include "keeper/estimation.hpp"
#include "keeper/mlp.hpp"
#include "keeper/skills.hpp"

namespace keeper {

// Decodable skills for one planner. Index 0 is always Stand; dynamic skills
// follow in canonical enum order. Restricting the table reproduces the
// 1/2/3-skill ablations.
struct SkillTable {
  std::vector<SkillKind> kinds{SkillKind::Stand, SkillKind::Sidestep,
                               SkillKind::Dive, SkillKind::Jump};

  int size() const { return static_cast<int>(kinds.size()); }
  int index_of(SkillKind k) const;  // -1 when absent

  // subset over {sidestep, dive, jump}; "all" or empty selects every skill.
  static SkillTable from_names(const std::vector<std::string>& names);
  std::string names_csv() const;
};

// One planner output: a distribution-shaped skill choice plus bounded curve
// coefficients. During rollout skill_probs carries the one-hot of the
// sampled index so argmax decoding covers both training and greedy eval.
struct PlannerAction {
  VectorXd skill_probs;  // size = table size, simplex
  VectorXd deltas;       // 12 = 4 control points x 3 axes, each in (-1,1)
};

PlannerAction stand_action(int table_size);

struct RobotFrame {
  Vec3 rpy = Vec3::Zero();
  Vec3 base = Vec3::Zero();
  Vec3 end_effector = Vec3::Zero();
};

// Planner input: short histories sampled at the 30 Hz control rate plus the
// previous planner action and the active skill phase. Histories are
// oldest-first; early-episode gaps are back-filled with the first real value
// by the producer.
struct PlannerObservation {
  std::vector<Vec3> ball_history;        // positions, size 6
  std::vector<RobotFrame> robot_history; // size 6
  PlannerAction previous_action;
  double phase = 0.0;
};

struct ObservationLayout {
  int ball_frames = 6;
  int robot_frames = 6;
  int n_skills = 4;  // table size
  int n_cont = 12;

  int dim() const {
    return 3 * ball_frames + 9 * robot_frames + n_skills + n_cont + 1;
  }
  bool operator==(const ObservationLayout&) const = default;
};

// Fixed flattening: ball positions, robot frames (rpy, base, end-effector
// per frame), previous action (probs then deltas), phase. Size mismatches
// throw.
VectorXd encode_observation(const PlannerObservation& obs,
                            const ObservationLayout& layout);

// How tanh-bounded deltas become control points around the per-skill nominal
// curve. Every decoded point is clamped into the workspace box.
struct DecodeConfig {
  Vec3 delta_scale{0.5, 0.9, 0.5};         // sagittal, lateral, vertical
  Vec3 workspace_min{-0.1, -1.0, 0.0};
  Vec3 workspace_max{0.8, 1.0, 1.2};
  Vec3 nominal_start{0.3, 0.0, 0.1};
  double duration = 0.5;
  // Nominal P1..P4 per dynamic skill.
  std::array<Vec3, 4> sidestep_tail{Vec3{0.3, 0.0, 0.12}, Vec3{0.3, 0.0, 0.14},
                                    Vec3{0.3, 0.0, 0.16}, Vec3{0.3, 0.0, 0.18}};
  std::array<Vec3, 4> dive_tail{Vec3{0.3, 0.0, 0.15}, Vec3{0.3, 0.0, 0.25},
                                Vec3{0.3, 0.0, 0.30}, Vec3{0.3, 0.0, 0.30}};
  std::array<Vec3, 4> jump_tail{Vec3{0.3, 0.0, 0.30}, Vec3{0.3, 0.0, 0.50},
                                Vec3{0.3, 0.0, 0.62}, Vec3{0.3, 0.0, 0.65}};

  const std::array<Vec3, 4>& tail(SkillKind k) const;
};

struct DecodedPlan {
  SkillKind skill = SkillKind::Stand;
  BezierCurve curve;  // meaningful for dynamic skills only
};

// argmax of skill_probs (ties break to the lowest index); dynamic skills get
// nominal + scaled deltas, clamped to the workspace box; P0 is pinned to the
// nominal start (begin_skill later overwrites it with the live end-effector).
DecodedPlan decode_action(const PlannerAction& action, const SkillTable& table,
                          const DecodeConfig& cfg);

// ---- model-based baseline ----

struct ModelBasedConfig {
  double reach_plane_x = 0.3;    // where the end-effector meets the ball
  double reach_plane_min = 0.05; // deepest fallback interception plane
  double contact_reach = 0.12;   // how far past an envelope the hand reaches
  double commit_horizon = 0.6;   // start a skill once arrival is this close
  double min_hit_time = 0.2;     // earliest commanded hit, seconds
  double sidestep_abs_y = 0.3;   // lateral band where sidestep suffices
  double predict_horizon = 2.0;
};

// Predicts the interception point from the belief and picks skill + curve by
// the height/width rules; Stand means hold (no crossing predicted, or the
// ball is still too far out).
DecodedPlan model_based_plan(const BallBelief& belief, const RobotState& robot,
                             const SkillSet& skills, const ModelBasedConfig& cfg,
                             double ball_radius);

}  // namespace keeper
