#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "keeper/env.hpp"
#include "keeper/planners.hpp"
#include "keeper/policy.hpp"

namespace keeper {

// One planner-rate interaction, flattened for minibatching. log_prob and
// value are frozen at collection time and play the "old policy" role in the
// PPO ratio.
struct Transition {
  VectorXd observation;
  int skill = 0;
  VectorXd pre_squash;  // continuous sample before the tanh squash
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;    // episode ended on this transition
  int timestep = 0;     // planner step within its episode
};

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  double learning_rate = 3e-4;
  bool lr_linear_decay = true;  // anneals to zero across `iterations`
  int epochs = 4;
  int minibatch = 256;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double grad_clip = 1.0;
  int rollout_steps = 90;
  int n_envs = 16;
  int iterations = 600;
  std::vector<int> hidden{256, 128};
  double log_std_init = -0.5;
  double log_std_min = -4.0;
  double log_std_max = 1.0;
  double stand_bias = 2.0;  // initial stand-logit offset (keeps early
                            // episodes alive long enough to see the ball)
};

// Generalized advantage estimation with episode-boundary resets. last_value
// bootstraps a rollout cut off mid-episode; it is ignored when the final
// transition is terminal. Returns (advantages, returns) with
// returns[t] = advantages[t] + values[t].
std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<bool>& dones, double last_value, double gamma,
    double lambda);

// In-place shift/scale to mean 0 and unit population std (1e-8 floor).
void normalize_advantages(std::vector<double>& advantages);

// Loss breakdown of one minibatch evaluation. total_loss is what the
// optimizer descends: policy + value_coef * value - entropy_coef * entropy.
struct MinibatchEval {
  double total_loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;      // categorical + pre-squash Gaussian, per sample
  double entropy_cat = 0.0;
  double approx_kl = 0.0;    // mean(old_lp - new_lp)
  double clip_fraction = 0.0;
  bool finite = true;
};

// Evaluates the clipped-surrogate objective on batch[indices] and, when
// accumulate_grads is set, adds its parameter gradients to the network
// (callers zero_grads first). Exposed separately so gradient checks can
// difference total_loss against the analytic gradients. advantages must be
// pre-normalized; advantages/returns are indexed by the same positions as
// batch.
MinibatchEval ppo_minibatch(PolicyNetwork& net,
                            const std::vector<Transition>& batch,
                            const std::vector<int>& indices,
                            const std::vector<double>& advantages,
                            const std::vector<double>& returns,
                            const PpoConfig& cfg, bool accumulate_grads);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
  bool aborted = false;
  std::string abort_reason;
};

// Runs cfg.epochs shuffled passes of minibatch ascent over the batch.
// Advantages must already be normalized. A non-finite loss aborts the whole
// update and restores the parameters and optimizer state from before it.
UpdateStats ppo_update(PolicyNetwork& net, Adam& opt,
                       const std::vector<Transition>& batch,
                       const std::vector<double>& advantages,
                       const std::vector<double>& returns,
                       const PpoConfig& cfg, double lr, Rng& shuffle_rng);

struct IterationLog {
  int iteration = 0;
  double mean_return = 0.0;  // over episodes completed this iteration
  double save_rate = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double lr = 0.0;
  int episodes = 0;
  std::int64_t env_steps = 0;  // cumulative planner steps
  bool update_aborted = false;
};

void write_curve_csv(const std::string& path,
                     const std::vector<IterationLog>& curve);

// Self-describing parameter snapshot: enough to rebuild the network and
// refuse mismatched layouts, plus optimizer state for exact resume.
struct Checkpoint {
  int version = 1;
  ObservationLayout layout;
  std::vector<int> hidden;
  std::string skills;  // dynamic skill names, canonical csv
  VectorXd params;
  VectorXd opt_m;  // empty when the optimizer state was not saved
  VectorXd opt_v;
  int opt_t = 0;
  int iteration = 0;
  std::int64_t env_steps = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);  // runtime_error if malformed

// Rebuilds a network from a checkpoint; domain_error when the declared
// layout and the parameter vector disagree.
PolicyNetwork restore_network(const Checkpoint& c);

// On-policy trainer: alternates rollout collection over persistent episode
// slots with PPO updates. Fully deterministic for a given (seed, config),
// independent of worker count: every slot owns counter-derived RNG streams
// and a disjoint transition buffer, and the update itself is single-threaded.
class Trainer {
 public:
  Trainer(const EpisodeConfig& env_cfg, const SkillTable& table,
          const DecodeConfig& decode, const PpoConfig& ppo, std::uint64_t seed,
          int workers = 1);

  // Runs n iterations; the learning-rate schedule anneals over
  // ppo.iterations regardless of how many are run here. The hook fires after
  // each iteration (checkpoint cadence, CSV streaming).
  std::vector<IterationLog> run(
      int n_iterations,
      const std::function<void(const IterationLog&)>& on_iteration = {});

  PolicyNetwork& net() { return net_; }
  const PolicyNetwork& net() const { return net_; }
  const Adam& optimizer() const { return opt_; }
  const ObservationLayout& layout() const { return layout_; }
  const SkillTable& table() const { return table_; }
  int iteration() const { return iteration_; }
  std::int64_t env_steps() const { return env_steps_; }

  Checkpoint snapshot(std::map<std::string, std::string> metadata = {}) const;
  // Exact resume; domain_error when the checkpoint was trained with a
  // different layout, network shape, or skill table.
  void restore(const Checkpoint& c);

 private:
  struct Slot {
    explicit Slot(Rng r) : act_rng(std::move(r)) {}
    std::optional<Episode> episode;
    Rng act_rng;
    std::uint64_t next_episode = 0;
    std::vector<Transition> buffer;
    std::vector<double> episode_returns;
    std::vector<char> episode_saved;
    double last_value = 0.0;
  };

  void reset_slot(Slot& slot, int index);
  void collect_slot(Slot& slot, int index);

  EpisodeConfig env_cfg_;
  SkillTable table_;
  DecodeConfig decode_;
  PpoConfig cfg_;
  std::uint64_t master_ = 0;
  int workers_ = 1;
  ObservationLayout layout_;
  PolicyNetwork net_;
  Adam opt_;
  Rng shuffle_rng_;
  std::vector<Slot> slots_;
  int iteration_ = 0;
  std::int64_t env_steps_ = 0;
};

}  // namespace keeper
