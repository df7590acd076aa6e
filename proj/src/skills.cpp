#include "keeper/skills.hpp"

#include <cmath>
#include <stdexcept>

namespace keeper {

namespace {

constexpr double kPi = 3.14159265358979323846;

// E||g|| for g ~ N(0, I3) times the mean of |sin(pi t)| over [0,1]. Dividing
// the configured target error by this maps "mean position error" onto the
// per-axis std of the drawn offset.
const double kNoiseCalibration = 2.0 * std::sqrt(2.0 / kPi) * (2.0 / kPi);

double axis_clamp(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

double axis_excess(double v, double lo, double hi) {
  return v < lo ? lo - v : (v > hi ? v - hi : 0.0);
}

}  // namespace

const char* skill_name(SkillKind k) {
  switch (k) {
    case SkillKind::Stand: return "stand";
    case SkillKind::Sidestep: return "sidestep";
    case SkillKind::Dive: return "dive";
    case SkillKind::Jump: return "jump";
  }
  return "?";
}

SkillKind skill_from_name(const std::string& name) {
  if (name == "stand") return SkillKind::Stand;
  if (name == "sidestep") return SkillKind::Sidestep;
  if (name == "dive") return SkillKind::Dive;
  if (name == "jump") return SkillKind::Jump;
  throw std::invalid_argument("unknown skill: " + name);
}

const SkillEnvelope& SkillSet::envelope(SkillKind k) const {
  switch (k) {
    case SkillKind::Sidestep: return sidestep;
    case SkillKind::Dive: return dive;
    case SkillKind::Jump: return jump;
    default: throw std::invalid_argument("Stand has no envelope");
  }
}

RobotState nominal_robot_state(double start_x) {
  RobotState r;
  r.base_position = {start_x, 0.0, 0.25};
  r.base_rpy = Vec3::Zero();
  r.end_effector = {start_x + 0.1, 0.0, 0.1};
  r.end_effector_velocity = Vec3::Zero();
  r.fallen = false;
  return r;
}

BeginError can_begin(const SkillExecution* active, const RobotState& robot) {
  if (robot.fallen) return BeginError::RobotFallen;
  if (active && active->committed()) return BeginError::ActiveCommitted;
  return BeginError::None;
}

SkillExecution begin_skill(const RobotState& robot, SkillKind skill,
                           const BezierCurve& curve, double now,
                           const SkillSet& skills) {
  SkillExecution exec;
  exec.skill = skill;
  exec.start_time = now;
  exec.substeps_done = 0;
  exec.total_substeps = 15;
  if (skill == SkillKind::Stand) {
    exec.curve = BezierCurve::constant(robot.end_effector, skills.duration);
  } else {
    exec.curve = curve;
    exec.curve.duration = skills.duration;
    exec.curve.control_points[0] = robot.end_effector;
  }
  return exec;
}

Vec3 clamp_to_envelope(const Vec3& p, SkillKind skill, const SkillSet& skills) {
  const SkillEnvelope& e = skills.envelope(skill);
  return {axis_clamp(p.x(), skills.sagittal_min, skills.sagittal_max),
          axis_clamp(p.y(), -e.lateral_reach, e.lateral_reach),
          axis_clamp(p.z(), e.z_min, e.z_max)};
}

double envelope_distance(const Vec3& p, SkillKind skill,
                         const SkillSet& skills) {
  const SkillEnvelope& e = skills.envelope(skill);
  const Vec3 d{axis_excess(p.x(), skills.sagittal_min, skills.sagittal_max),
               axis_excess(p.y(), -e.lateral_reach, e.lateral_reach),
               axis_excess(p.z(), e.z_min, e.z_max)};
  return d.norm();
}

namespace {

// Smooth per-skill base templates. Lateral terms are odd in the end-effector
// y so mirrored curves produce mirrored trunks.
void apply_base_template(SkillExecution const& exec, RobotState& robot,
                         double phase, const SkillSet& skills) {
  const double bump = std::sin(kPi * phase);
  const double base_x = robot.base_position.x();
  const double ee_y = robot.end_effector.y();
  switch (exec.skill) {
    case SkillKind::Stand:
      robot.base_position = {base_x, 0.0, 0.25};
      robot.base_rpy = Vec3::Zero();
      break;
    case SkillKind::Sidestep: {
      const double lean = axis_clamp(
          ee_y / skills.sidestep.lateral_reach, -1.0, 1.0);
      robot.base_position = {base_x, 0.5 * ee_y, 0.25};
      robot.base_rpy = {-0.4 * bump * lean, 0.0, 0.0};
      break;
    }
    case SkillKind::Dive: {
      const double lean = axis_clamp(ee_y / skills.dive.lateral_reach, -1.0, 1.0);
      robot.base_position = {base_x, 0.6 * ee_y, 0.25 + 0.08 * bump};
      robot.base_rpy = {-0.6 * bump * lean, -0.5 * bump, 0.0};
      break;
    }
    case SkillKind::Jump: {
      const double lean = axis_clamp(ee_y / skills.jump.lateral_reach, -1.0, 1.0);
      robot.base_position = {base_x, 0.4 * ee_y, 0.25 + 0.30 * bump};
      robot.base_rpy = {-0.2 * bump * lean, -0.6 * bump, 0.0};
      break;
    }
  }
}

}  // namespace

void step_execution(SkillExecution& exec, RobotState& robot, double dt,
                    Rng& rng, const SkillSet& skills) {
  (void)dt;  // the substep is the time unit; phase comes from the counter
  if (robot.fallen) return;

  if (!exec.noise_drawn) {
    exec.noise_drawn = true;
    if (is_dynamic(exec.skill)) {
      const double target = skills.envelope(exec.skill).tracking_noise_std;
      exec.tracking_offset = (target / kNoiseCalibration) * rng.gaussian3();
    } else {
      exec.tracking_offset = Vec3::Zero();
    }
  }

  exec.substeps_done = std::min(exec.substeps_done + 1, exec.total_substeps);
  const Phase t = exec.phase();
  const Vec3 desired = evaluate(exec.curve, t);

  if (is_dynamic(exec.skill)) {
    if (t.value() >= skills.fall_check_min_phase &&
        envelope_distance(desired, exec.skill, skills) > skills.fall_margin) {
      robot.fallen = true;
      return;
    }
    const Vec3 tracked = clamp_to_envelope(desired, exec.skill, skills);
    robot.end_effector =
        tracked + std::sin(kPi * t.value()) * exec.tracking_offset;
    robot.end_effector_velocity = derivative(exec.curve, t);
  } else {
    // Stand holds the held point bit-exactly; re-evaluating the constant
    // curve would wobble by a rounding ulp in the weight sum.
    robot.end_effector = exec.curve.control_points[0];
    robot.end_effector_velocity = Vec3::Zero();
  }
  apply_base_template(exec, robot, t.value(), skills);
}

double reward_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                     double rho) {
  if (u.size() != v.size()) {
    throw std::domain_error("reward_kernel: dimension mismatch");
  }
  return std::exp(-rho * (u - v).squaredNorm());
}

RewardWeights::RewardWeights(double w_e, double w_i, double w_s, double w_ep,
                             double w_ev)
    : end_effector(w_e),
      imitation(w_i),
      smoothing(w_s),
      ee_position(w_ep),
      ee_velocity(w_ev) {
  validate();
}

void RewardWeights::validate() const {
  if (std::abs(end_effector + imitation + smoothing - 1.0) > 1e-12 ||
      std::abs(ee_position + ee_velocity - 1.0) > 1e-12) {
    throw std::invalid_argument("RewardWeights: groups must each sum to 1");
  }
}

double control_reward(const ControlTraceStep& step, const BezierCurve& curve,
                      Phase t, const RewardWeights& weights,
                      const KernelScales& scales) {
  weights.validate();
  const Vec3 ref_pos = evaluate(curve, t);
  const Vec3 ref_vel = derivative(curve, t);
  const double r_ee =
      weights.ee_position * reward_kernel(ref_pos, step.ee_position,
                                          scales.rho_position) +
      weights.ee_velocity * reward_kernel(ref_vel, step.ee_velocity,
                                          scales.rho_rate);

  Eigen::VectorXd h_act(1), h_ref(1);
  h_act << step.base_height_actual;
  h_ref << step.base_height_ref;
  const double r_imit =
      (reward_kernel(step.gen_pos_actual, step.gen_pos_ref,
                     scales.rho_position) +
       reward_kernel(h_act, h_ref, scales.rho_position) +
       reward_kernel(step.rpy_actual, step.rpy_ref, scales.rho_position)) /
      3.0;

  const Vec3 zero = Vec3::Zero();
  const double r_smooth =
      (reward_kernel(step.rpy_rate, zero, scales.rho_rate) +
       reward_kernel(step.rpy_accel, zero, scales.rho_rate) +
       reward_kernel(step.effort, zero, scales.rho_rate)) /
      3.0;

  return weights.end_effector * r_ee + weights.imitation * r_imit +
         weights.smoothing * r_smooth;
}

}  // namespace keeper
