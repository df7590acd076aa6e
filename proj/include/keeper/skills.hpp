#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "keeper/curves.hpp"
#include "keeper/rng.hpp"

namespace keeper {

// Canonical order; categorical action index 0 is always Stand.
enum class SkillKind { Stand = 0, Sidestep = 1, Dive = 2, Jump = 3 };

inline constexpr int kNumSkills = 4;

const char* skill_name(SkillKind k);
SkillKind skill_from_name(const std::string& name);
inline bool is_dynamic(SkillKind k) { return k != SkillKind::Stand; }

// Reachable end-effector box for one dynamic skill: |y| <= lateral_reach,
// z in [z_min, z_max]. The sagittal (x) band is shared across skills and
// lives in SkillSet. tracking_noise_std is the target mean position error of
// a noisy execution, in meters.
struct SkillEnvelope {
  double lateral_reach = 0.0;
  double z_min = 0.0;
  double z_max = 0.0;
  double tracking_noise_std = 0.0;
};

struct SkillSet {
  SkillEnvelope sidestep{0.45, 0.05, 0.35, 0.065};
  SkillEnvelope dive{0.80, 0.05, 0.55, 0.14};
  SkillEnvelope jump{0.55, 0.35, 0.95, 0.11};
  double sagittal_min = 0.0;  // absolute x band for the end-effector
  double sagittal_max = 0.6;
  double duration = 0.5;         // seconds per dynamic skill
  double fall_margin = 0.30;     // desired-curve excursion beyond the
                                 // envelope that topples the robot
  double fall_check_min_phase = 0.2;  // startup transient is exempt: every
                                      // skill legitimately departs from the
                                      // standing end-effector
  const SkillEnvelope& envelope(SkillKind k) const;
};

// Abstract robot pose. The base follows a per-skill kinematic template and
// carries the trunk collision box; the end-effector tracks the commanded
// curve clamped to the skill envelope.
struct RobotState {
  Vec3 base_position{0.2, 0.0, 0.25};
  Vec3 base_rpy = Vec3::Zero();
  Vec3 end_effector{0.3, 0.0, 0.1};
  Vec3 end_effector_velocity = Vec3::Zero();
  bool fallen = false;
};

RobotState nominal_robot_state(double start_x);

// Trunk box half extents (x, y, z) around base_position; axis aligned.
inline const Vec3 kTrunkHalfExtents{0.2, 0.15, 0.15};

// One in-flight skill. Phase is derived from an integer substep counter so
// that 15 control steps at 30 Hz reach phase 1 exactly.
struct SkillExecution {
  SkillKind skill = SkillKind::Stand;
  BezierCurve curve;
  double start_time = 0.0;
  int substeps_done = 0;
  int total_substeps = 15;
  bool noise_drawn = false;
  Vec3 tracking_offset = Vec3::Zero();  // drawn once, applied as offset*sin(pi*phase)

  Phase phase() const {
    return Phase(std::min(substeps_done, total_substeps) /
                 static_cast<double>(total_substeps));
  }
  bool complete() const { return substeps_done >= total_substeps; }
  // Dynamic skills cannot be replaced while committed; Stand never commits.
  bool committed() const {
    return is_dynamic(skill) && substeps_done > 0 && !complete();
  }
};

enum class BeginError { None, ActiveCommitted, RobotFallen };

// Whether a new skill may start now. `active` may be null (no execution yet).
BeginError can_begin(const SkillExecution* active, const RobotState& robot);

// Starts a skill. The curve's first control point is overwritten with the
// robot's current end-effector so executions never teleport. Stand ignores
// the passed curve and holds the current end-effector.
// Pre: can_begin(...) == BeginError::None.
SkillExecution begin_skill(const RobotState& robot, SkillKind skill,
                           const BezierCurve& curve, double now,
                           const SkillSet& skills);

// Per-axis box projection into the skill's envelope (plus the shared
// sagittal band). Identity for points already inside.
Vec3 clamp_to_envelope(const Vec3& p, SkillKind skill, const SkillSet& skills);

// Euclidean distance from a point to the skill's envelope box (0 inside).
double envelope_distance(const Vec3& p, SkillKind skill, const SkillSet& skills);

// Advances one control substep of dt seconds: moves the end-effector to the
// clamped curve point plus the smooth tracking-noise offset, updates the base
// template, and topples the robot when the desired curve strays farther than
// fall_margin outside the envelope (past the startup transient).
// Fallen robots are absorbing. The tracking offset is drawn lazily on the
// first step from `rng`.
void step_execution(SkillExecution& exec, RobotState& robot, double dt,
                    Rng& rng, const SkillSet& skills);

// ---- control-level reward (executor diagnostics) ----

// exp(-rho * ||u - v||^2); peaks at 1 for u == v. Dimension mismatch throws.
double reward_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                     double rho);

struct KernelScales {
  double rho_position = 5.0;
  double rho_rate = 0.5;
};

// Mixing weights; the two groups must each sum to 1 (checked on construction).
struct RewardWeights {
  double end_effector = 0.5;
  double imitation = 0.3;
  double smoothing = 0.2;
  double ee_position = 0.8;
  double ee_velocity = 0.2;

  RewardWeights() = default;
  RewardWeights(double w_e, double w_i, double w_s, double w_ep, double w_ev);
  void validate() const;  // throws std::invalid_argument on bad sums
};

// One control-rate sample of actual vs. reference signals.
struct ControlTraceStep {
  Eigen::VectorXd gen_pos_actual;  // generalized-position proxy
  Eigen::VectorXd gen_pos_ref;
  double base_height_actual = 0.0;
  double base_height_ref = 0.0;
  Vec3 rpy_actual = Vec3::Zero();
  Vec3 rpy_ref = Vec3::Zero();
  Vec3 rpy_rate = Vec3::Zero();
  Vec3 rpy_accel = Vec3::Zero();
  Vec3 effort = Vec3::Zero();  // squared end-effector acceleration proxy
  Vec3 ee_position = Vec3::Zero();
  Vec3 ee_velocity = Vec3::Zero();
};

// Weighted tracking reward: end-effector group follows the curve position and
// velocity (0.8 / 0.2); imitation and smoothing groups average their three
// kernels each. Result is in (0, 1].
double control_reward(const ControlTraceStep& step, const BezierCurve& curve,
                      Phase t, const RewardWeights& weights,
                      const KernelScales& scales);

}  // namespace keeper
