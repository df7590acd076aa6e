#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "keeper/env.hpp"
#include "keeper/estimation.hpp"
#include "keeper/policy.hpp"

namespace keeper {

// A frozen decision-maker under evaluation, called once per planner decision.
// Implementations may keep per-episode state (trackers); reset() runs before
// each episode. Agents must be deterministic functions of the episode so that
// evaluation results do not depend on the worker count.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual void reset() {}
  // Returns the plan to execute plus the raw action to report; the raw action
  // feeds the next observation and the action-magnitude reward term.
  virtual std::pair<DecodedPlan, PlannerAction> act(const Episode& ep) = 0;
};

// Greedy head of a trained network: argmax skill, tanh of the Gaussian mean.
// Refuses construction when the network shape does not match the layout the
// skill table implies.
class GreedyPolicyAgent : public Agent {
 public:
  GreedyPolicyAgent(const PolicyNetwork& net, const SkillTable& table,
                    const DecodeConfig& decode);
  std::pair<DecodedPlan, PlannerAction> act(const Episode& ep) override;

 private:
  const PolicyNetwork& net_;
  SkillTable table_;
  DecodeConfig decode_;
  ObservationLayout layout_;
};

// Kalman tracker feeding the geometric interception rules. Consumes the
// episode's 30 Hz sensor stream incrementally and holds Stand while the
// executor is committed, so the baseline never trips the switch latch.
class ModelBasedAgent : public Agent {
 public:
  ModelBasedAgent(const EpisodeConfig& env_cfg, const FilterParams& filter,
                  const ModelBasedConfig& mb);
  void reset() override;
  std::pair<DecodedPlan, PlannerAction> act(const Episode& ep) override;

 private:
  EpisodeConfig env_;
  SkillTable table_;  // full canonical table
  FilterParams filter_;
  ModelBasedConfig mb_;
  BallTracker tracker_;
  double motion_gate_ = 0.03;  // displacement that marks the release
  std::size_t consumed_ = 0;
  bool moving_ = false;
};

// One evaluated shot.
struct ShotRecord {
  int shot_id = 0;
  ShotSpec shot;
  double flight_time = 0.0;  // planar distance / speed
  Outcome outcome = Outcome::Timeout;
  bool saved = false;
  bool ball_contacted = false;
  bool envelope_feasible = false;
  std::string skills_used;  // distinct dynamic skills, first-use order
  double episode_return = 0.0;
  int steps = 0;
};

struct InterceptionMap {
  std::string method;
  std::uint64_t seed = 0;
  std::uint64_t shot_set_hash = 0;  // FNV over the sampled shot sequence
  std::vector<ShotRecord> records;

  int n() const { return static_cast<int>(records.size()); }
  int saved_count() const;
  double save_rate() const;  // saved / total; 0 on an empty map
};

struct EvalOptions {
  int workers = 1;
  bool record = false;  // construct episodes with substep recording
  // Fires once per episode in shot order after all episodes finish (replay
  // logging). Setting it keeps every episode alive until the pass runs.
  std::function<void(int shot_id, const Episode&)> on_episode;
};

// Runs n independent episodes with per-shot seeds derived from `seed` and a
// fresh agent per worker. Deterministic given (seed, env config, agent) for
// any worker count. Throws std::invalid_argument for n_shots < 1.
InterceptionMap evaluate(const EpisodeConfig& env_cfg, const std::string& method,
                         const std::function<std::unique_ptr<Agent>()>& make_agent,
                         int n_shots, std::uint64_t seed,
                         const EvalOptions& opts = {});

// True when the unimpeded flight passes within contact reach of a dynamic
// skill's end-effector envelope before crossing the goal plane. A purely
// geometric label: reaction time is never binding at these launch distances.
bool envelope_feasible(const ShotSpec& shot, const EpisodeConfig& cfg);

// 95% score interval for a binomial rate. Requires 0 <= successes <= n, n >= 1.
struct WilsonInterval {
  double lo = 0.0;
  double hi = 0.0;
};
WilsonInterval wilson_interval(int successes, int n, double z = 1.96);

// Two-sided exact binomial test on the discordant pair counts:
// p = min(1, 2 * P(Bin(b + c, 1/2) <= min(b, c))), and 1 when b + c = 0.
double mcnemar_exact(int b, int c);

// Save rates over a 3x3 grid of the goal mouth, binned by shot target.
// Rows index height (0 = ground row), columns index y (0 = -y post).
struct RegionReport {
  std::array<std::array<int, 3>, 3> count{};
  std::array<std::array<int, 3>, 3> saved{};

  double rate(int row, int col) const;  // NaN for an empty cell
  double row_rate(int row) const;       // pooled across the row
  double lower_corner_rate() const;     // cells (0,0) and (0,2) pooled
  int lower_corner_count() const;
};
RegionReport region_report(const InterceptionMap& map, const Arena& arena = {});
std::string region_text(const RegionReport& r);

// Paired comparison over a shared shot set; throws std::domain_error when the
// two maps were not evaluated on identical shots.
struct PairedComparison {
  std::string method_a;
  std::string method_b;
  int n = 0;
  double rate_a = 0.0;
  double rate_b = 0.0;
  double delta = 0.0;  // rate_b - rate_a
  WilsonInterval ci_a;
  WilsonInterval ci_b;
  int b_only = 0;  // saved by b, missed by a
  int a_only = 0;  // saved by a, missed by b
  double p_value = 1.0;
  bool significant = false;  // p < 0.05
  bool ci_overlap = true;
};
PairedComparison compare(const InterceptionMap& a, const InterceptionMap& b);
std::string comparison_text(const PairedComparison& c);

// shot_id,target_y,target_z,planar_speed,flight_time,outcome,chosen_skills,
// terminal_cause; outcome is saved|missed, terminal_cause the episode ending.
void write_map_csv(const std::string& path, const InterceptionMap& map);
// Full per-shot records, one JSON object per line, header line first.
void write_map_jsonl(const std::string& path, const InterceptionMap& map);

}  // namespace keeper
