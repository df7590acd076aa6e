#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "keeper/ball.hpp"
#include "keeper/planners.hpp"
#include "keeper/skills.hpp"

namespace keeper {

// Goal geometry and field bounds. The goal mouth is the rectangle
// |y| <= half_width, 0 <= z <= height in the plane x = 0; the keeper starts
// just in front of it.
struct Arena {
  double goal_half_width = 0.75;
  double goal_height = 0.9;
  double robot_start_x = 0.2;
  double clear_x = 6.0;  // balls past this are out of play
};

// Ball-robot collision response. A shot at or below stop_speed_max dies on
// the blocker; faster shots bounce off with the normal (sagittal) component
// reflected and the tangential components damped.
struct ContactRule {
  double radius = 0.12;            // effector-to-ball-center reach
  double stop_speed_max = 6.0;
  double restitution = 0.4;
  double tangential_damping = 0.5;
};

// Decision-rate reward. Everything is gated on the ball being within
// gate_distance of the end-effector; inside the gate, a stopped ball pays 1,
// with shaped proximity, curve-tracking, and action-magnitude terms on top.
// The maximum is 1 + 0.6 + 0.2 + 0.2 = 2 per decision.
struct PlannerRewardParams {
  double gate_distance = 0.3;
  double stop_speed = 0.1;
  double w_stop = 1.0;
  double w_proximity = 0.6;
  double w_curve = 0.2;
  double w_regularizer = 0.2;
  double rho_position = 5.0;
  double rho_alpha = 0.5;
};

// 30 Hz ball sensing: isotropic position noise plus a constant per-episode
// latency drawn uniformly at reset.
struct SensorConfig {
  double noise_std = 0.05;
  double delay_min = 0.08;
  double delay_max = 0.10;
};

struct EpisodeConfig {
  int planner_steps = 90;
  int substeps_per_decision = 3;
  double control_dt = 1.0 / 30.0;
  int n_skills = 4;  // planner action width (skill table size)

  Arena arena;
  ShotDistribution shots;
  GroundModel ground;
  SkillSet skills;
  ContactRule contact;
  PlannerRewardParams reward;
  SensorConfig sensor;

  double release_max = 0.5;  // shot release offset, snapped to the 30 Hz grid

  bool noise_enabled = true;   // false zeroes sensor noise, sensor delay,
                               // and skill tracking error; shot and release
                               // randomness stay on
  bool goal_termination = true;
  bool strict_latch = false;   // true ignores every decode while committed;
                               // false lets a conflicting dynamic skill
                               // topple the robot instead

  double decision_period() const { return substeps_per_decision * control_dt; }
  double horizon_seconds() const { return planner_steps * decision_period(); }
};

enum class Outcome { Saved, Goal, Timeout, RobotFell };

const char* outcome_name(Outcome o);

struct RewardTerms {
  double gate = 0.0;  // 0 or 1
  double stop = 0.0;
  double proximity = 0.0;
  double curve = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  RewardTerms terms;
};

struct EpisodeResult {
  ShotSpec shot;
  double release_time = 0.0;
  double sensor_delay = 0.0;
  Outcome outcome = Outcome::Timeout;
  bool saved = false;
  std::optional<Eigen::Vector2d> goal_crossing;  // (y, z) in the goal plane
  double crossing_time = 0.0;                    // valid when crossing is set
  int steps_done = 0;
  double end_time = 0.0;
  bool ball_contacted = false;
  double episode_return = 0.0;
  std::optional<double> first_gate_speed;  // ball speed when the gate opened
  std::vector<SkillKind> active_skills;    // one entry per decision
};

// One 30 Hz frame of everything a replay needs.
struct SubstepRecord {
  double time = 0.0;
  Vec3 ball_position = Vec3::Zero();
  Vec3 ball_velocity = Vec3::Zero();
  Vec3 observed_position = Vec3::Zero();
  Vec3 base_position = Vec3::Zero();
  Vec3 base_rpy = Vec3::Zero();
  Vec3 end_effector = Vec3::Zero();
  double phase = 0.0;
  SkillKind skill = SkillKind::Stand;
  bool fallen = false;
};

struct DecisionRecord {
  int step = 0;
  SkillKind commanded = SkillKind::Stand;
  SkillKind active = SkillKind::Stand;
  bool latched = false;  // commanded decode was ignored by the commitment
  RewardTerms terms;
};

// One keeper-vs-shot episode: a 10 Hz decision loop over a 30 Hz control and
// sensing loop. All randomness (shot, release offset, sensor latency and
// noise, skill tracking error) comes from the seed, so a (seed, action
// sequence) pair replays bit-identically.
class Episode {
 public:
  Episode(const EpisodeConfig& cfg, std::uint64_t seed, bool record = false);

  // Advances one decision: applies (or latches away) the decoded plan, runs
  // the control substeps, and pays the decision reward. `raw` is the action
  // exactly as the policy emitted it; its magnitude enters the reward and it
  // is echoed in the next observation. Throws std::logic_error once done.
  StepResult step(const DecodedPlan& plan, const PlannerAction& raw);

  bool done() const { return done_; }
  const EpisodeResult& result() const;  // throws std::logic_error until done

  const PlannerObservation& observation() const { return obs_; }
  // Every 30 Hz measurement so far, oldest first (one per elapsed substep
  // plus the reset sample). Model-based agents consume these incrementally.
  const std::vector<BallObservation>& sensor_stream() const { return stream_; }

  double time() const;
  const RobotState& robot() const { return robot_; }
  const BallState& ball() const { return ball_; }  // ground truth
  const SkillExecution& execution() const { return exec_; }
  const ShotSpec& shot() const { return shot_; }
  double release_time() const { return release_time_; }
  double sensor_delay() const { return delay_; }
  int steps_done() const { return steps_; }

  const std::vector<SubstepRecord>& replay() const { return substep_records_; }
  const std::vector<DecisionRecord>& decisions() const { return decision_records_; }

 private:
  void run_substep();
  void advance_ball(double t1);
  bool inside_contact_volume(const Vec3& p) const;
  std::optional<double> contact_entry_time(const BallState& s, double piece,
                                           bool rolling) const;
  void apply_contact(BallState& s) const;
  void sample_sensor();
  void push_robot_frame();
  void resolve_ball_alone();
  void finish(Outcome outcome, double at_time);
  RewardTerms decision_reward(const PlannerAction& raw) const;

  EpisodeConfig cfg_;
  Rng rng_;
  bool record_ = false;

  ShotSpec shot_;
  BallState launch_state_;  // state the instant the shot is released
  double release_time_ = 0.0;
  double delay_ = 0.0;

  BallState ball_;
  BallHistory history_;
  RobotState robot_;
  SkillExecution exec_;

  PlannerObservation obs_;
  std::vector<BallObservation> stream_;

  double noise_std_ = 0.0;
  int steps_ = 0;
  int substeps_total_ = 0;
  bool done_ = false;
  bool entered_goal_ = false;
  bool crossed_plane_ = false;
  bool contact_this_substep_ = false;
  bool ball_contacted_ = false;
  // Whether the ball ended the previous substep overlapping the robot's
  // contact volume, measured against that substep's pose. Distinguishes a
  // lingering resolved overlap from the volume sweeping onto the ball.
  bool ball_in_contact_volume_ = false;
  std::optional<Eigen::Vector2d> crossing_;
  double crossing_time_ = 0.0;

  EpisodeResult result_;
  std::vector<SubstepRecord> substep_records_;
  std::vector<DecisionRecord> decision_records_;
};

}  // namespace keeper
