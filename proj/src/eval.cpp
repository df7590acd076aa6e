#include "keeper/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "keeper/rng.hpp"

namespace keeper {

GreedyPolicyAgent::GreedyPolicyAgent(const PolicyNetwork& net,
                                     const SkillTable& table,
                                     const DecodeConfig& decode)
    : net_(net), table_(table), decode_(decode) {
  layout_.n_skills = table_.size();
  if (net_.obs_dim() != layout_.dim() || net_.n_skills() != table_.size() ||
      net_.n_cont() != layout_.n_cont) {
    throw std::domain_error(
        "policy/table layout mismatch: refusing to evaluate");
  }
}

std::pair<DecodedPlan, PlannerAction> GreedyPolicyAgent::act(const Episode& ep) {
  const VectorXd obs = encode_observation(ep.observation(), layout_);
  const auto s = net_.act_greedy(obs);
  PlannerAction raw;
  raw.skill_probs = VectorXd::Zero(table_.size());
  raw.skill_probs(s.skill) = 1.0;
  raw.deltas = s.action;
  return {decode_action(raw, table_, decode_), raw};
}

ModelBasedAgent::ModelBasedAgent(const EpisodeConfig& env_cfg,
                                 const FilterParams& filter,
                                 const ModelBasedConfig& mb)
    : env_(env_cfg), filter_(filter), mb_(mb), tracker_(filter) {
  // Samples taken while the ball is still held carry no motion information,
  // and a two-point init straddling the release instant mixes held and flying
  // positions into a badly scaled velocity. Track only once displacement from
  // the first sample clears the noise floor.
  const double sigma = env_.noise_enabled ? env_.sensor.noise_std : 0.0;
  motion_gate_ = std::max(0.03, 3.0 * std::sqrt(2.0) * sigma);
}

void ModelBasedAgent::reset() {
  tracker_ = BallTracker(filter_);
  consumed_ = 0;
  moving_ = false;
}

std::pair<DecodedPlan, PlannerAction> ModelBasedAgent::act(const Episode& ep) {
  const auto& stream = ep.sensor_stream();
  if (!moving_) {
    while (consumed_ < stream.size() &&
           (stream[consumed_].position - stream.front().position).norm() <=
               motion_gate_) {
      ++consumed_;
    }
    moving_ = consumed_ < stream.size();
  }
  for (; consumed_ < stream.size(); ++consumed_) {
    tracker_.observe(stream[consumed_]);
  }

  const auto stand = [&] {
    return std::pair<DecodedPlan, PlannerAction>{
        DecodedPlan{}, stand_action(table_.size())};
  };
  // A committed executor cannot take a new plan, and commanding one would
  // trip the latch; hold until the skill completes.
  if (ep.execution().committed() || ep.robot().fallen ||
      !tracker_.initialized()) {
    return stand();
  }

  DecodedPlan plan = model_based_plan(tracker_.belief(), ep.robot(),
                                      env_.skills, mb_, env_.ground.ball_radius);
  const int idx = table_.index_of(plan.skill);
  if (idx <= 0) return stand();
  PlannerAction raw;
  raw.skill_probs = VectorXd::Zero(table_.size());
  raw.skill_probs(idx) = 1.0;
  raw.deltas = VectorXd::Zero(12);
  return {std::move(plan), std::move(raw)};
}

int InterceptionMap::saved_count() const {
  int k = 0;
  for (const auto& r : records) k += r.saved ? 1 : 0;
  return k;
}

double InterceptionMap::save_rate() const {
  return records.empty() ? 0.0
                         : static_cast<double>(saved_count()) / records.size();
}

namespace {

std::string skills_used_string(const std::vector<SkillKind>& active) {
  std::string out;
  std::vector<SkillKind> seen;
  for (SkillKind k : active) {
    if (!is_dynamic(k)) continue;
    if (std::find(seen.begin(), seen.end(), k) != seen.end()) continue;
    seen.push_back(k);
    if (!out.empty()) out += '|';
    out += skill_name(k);
  }
  return out;
}

}  // namespace

InterceptionMap evaluate(const EpisodeConfig& env_cfg, const std::string& method,
                         const std::function<std::unique_ptr<Agent>()>& make_agent,
                         int n_shots, std::uint64_t seed,
                         const EvalOptions& opts) {
  if (n_shots < 1) {
    throw std::invalid_argument("evaluate: n_shots must be >= 1");
  }
  if (!make_agent) {
    throw std::invalid_argument("evaluate: no agent factory");
  }

  std::vector<ShotRecord> records(n_shots);
  const bool keep = static_cast<bool>(opts.on_episode);
  std::vector<std::optional<Episode>> kept(keep ? n_shots : 0);

  auto run_range = [&](int lo, int hi) {
    auto agent = make_agent();
    for (int i = lo; i < hi; ++i) {
      Episode ep(env_cfg, derive_seed(seed, "eval-episode",
                                      static_cast<std::uint64_t>(i)),
                 opts.record);
      agent->reset();
      while (!ep.done()) {
        auto [plan, raw] = agent->act(ep);
        ep.step(plan, raw);
      }
      const auto& res = ep.result();
      ShotRecord& r = records[i];
      r.shot_id = i;
      r.shot = res.shot;
      r.flight_time = flight_time(res.shot);
      r.outcome = res.outcome;
      r.saved = res.saved;
      r.ball_contacted = res.ball_contacted;
      r.envelope_feasible = envelope_feasible(res.shot, env_cfg);
      r.skills_used = skills_used_string(res.active_skills);
      r.episode_return = res.episode_return;
      r.steps = res.steps_done;
      if (keep) kept[i].emplace(std::move(ep));
    }
  };

  const int workers = std::max(1, opts.workers);
  if (workers == 1 || n_shots == 1) {
    run_range(0, n_shots);
  } else {
    const int w = std::min(workers, n_shots);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(w);
    pool.reserve(w);
    for (int t = 0; t < w; ++t) {
      const int lo = t * n_shots / w;
      const int hi = (t + 1) * n_shots / w;
      pool.emplace_back([&, t, lo, hi] {
        try {
          run_range(lo, hi);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Deterministic fold in shot order, independent of completion order.
  std::string blob;
  blob.reserve(records.size() * 128);
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.shot.launch_position.x(), r.shot.launch_position.y(),
                  r.shot.launch_position.z(), r.shot.target_on_goal.x(),
                  r.shot.target_on_goal.y(), r.shot.planar_speed);
    blob += buf;
  }

  InterceptionMap map;
  map.method = method;
  map.seed = seed;
  map.shot_set_hash = fnv1a64(blob);
  map.records = std::move(records);

  if (keep) {
    for (int i = 0; i < n_shots; ++i) opts.on_episode(i, *kept[i]);
  }
  return map;
}

bool envelope_feasible(const ShotSpec& shot, const EpisodeConfig& cfg) {
  BallState s = solve_launch(shot);
  const double dt = 1e-3;
  const double horizon = cfg.horizon_seconds();
  static constexpr SkillKind kDynamic[] = {SkillKind::Sidestep, SkillKind::Dive,
                                           SkillKind::Jump};
  for (double t = 0.0; t < horizon && s.position.x() > 0.0; t += dt) {
    for (SkillKind k : kDynamic) {
      if (envelope_distance(s.position, k, cfg.skills) <= cfg.contact.radius) {
        return true;
      }
    }
    s = step_ball_grounded(s, dt, cfg.ground);
  }
  return false;
}

WilsonInterval wilson_interval(int successes, int n, double z) {
  if (n < 1 || successes < 0 || successes > n) {
    throw std::invalid_argument("wilson_interval: need 0 <= successes <= n");
  }
  const double p = static_cast<double>(successes) / n;
  const double z2n = z * z / n;
  const double denom = 1.0 + z2n;
  const double center = (p + z2n / 2.0) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / denom;
  WilsonInterval w;
  w.lo = std::max(0.0, center - half);
  w.hi = std::min(1.0, center + half);
  return w;
}

double mcnemar_exact(int b, int c) {
  if (b < 0 || c < 0) {
    throw std::invalid_argument("mcnemar_exact: counts must be non-negative");
  }
  const int n = b + c;
  if (n == 0) return 1.0;
  const int k = std::min(b, c);
  double tail = 0.0;
  for (int i = 0; i <= k; ++i) {
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                     std::lgamma(n - i + 1.0) - n * std::log(2.0));
  }
  return std::min(1.0, 2.0 * tail);
}

RegionReport region_report(const InterceptionMap& map, const Arena& arena) {
  if (map.records.empty()) {
    throw std::domain_error("region_report: empty map");
  }
  RegionReport rep;
  const double col_w = 2.0 * arena.goal_half_width / 3.0;
  const double row_h = arena.goal_height / 3.0;
  for (const auto& r : map.records) {
    const int col = std::clamp(
        static_cast<int>((r.shot.target_on_goal.x() + arena.goal_half_width) /
                         col_w),
        0, 2);
    const int row =
        std::clamp(static_cast<int>(r.shot.target_on_goal.y() / row_h), 0, 2);
    rep.count[row][col] += 1;
    rep.saved[row][col] += r.saved ? 1 : 0;
  }
  return rep;
}

double RegionReport::rate(int row, int col) const {
  if (count[row][col] == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(saved[row][col]) / count[row][col];
}

double RegionReport::row_rate(int row) const {
  int n = 0;
  int s = 0;
  for (int c = 0; c < 3; ++c) {
    n += count[row][c];
    s += saved[row][c];
  }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(s) / n;
}

int RegionReport::lower_corner_count() const {
  return count[0][0] + count[0][2];
}

double RegionReport::lower_corner_rate() const {
  const int n = lower_corner_count();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(saved[0][0] + saved[0][2]) / n;
}

std::string region_text(const RegionReport& r) {
  std::ostringstream out;
  out << "goal-grid save rates (rows top to bottom, columns -y to +y)\n";
  static const char* kRowName[3] = {"low", "mid", "top"};
  for (int row = 2; row >= 0; --row) {
    out << "  " << kRowName[row] << " ";
    for (int col = 0; col < 3; ++col) {
      char cell[48];
      if (r.count[row][col] == 0) {
        std::snprintf(cell, sizeof cell, "      -      ");
      } else {
        std::snprintf(cell, sizeof cell, " %.3f (%3d/%-3d)",
                      r.rate(row, col), r.saved[row][col], r.count[row][col]);
      }
      out << cell;
    }
    out << "\n";
  }
  return out.str();
}

PairedComparison compare(const InterceptionMap& a, const InterceptionMap& b) {
  if (a.n() != b.n() || a.shot_set_hash != b.shot_set_hash) {
    throw std::domain_error(
        "compare: maps were not evaluated on the same shot set");
  }
  if (a.records.empty()) {
    throw std::domain_error("compare: empty maps");
  }
  PairedComparison c;
  c.method_a = a.method;
  c.method_b = b.method;
  c.n = a.n();
  c.rate_a = a.save_rate();
  c.rate_b = b.save_rate();
  c.delta = c.rate_b - c.rate_a;
  c.ci_a = wilson_interval(a.saved_count(), a.n());
  c.ci_b = wilson_interval(b.saved_count(), b.n());
  for (int i = 0; i < c.n; ++i) {
    const bool sa = a.records[i].saved;
    const bool sb = b.records[i].saved;
    if (sb && !sa) ++c.b_only;
    if (sa && !sb) ++c.a_only;
  }
  c.p_value = mcnemar_exact(c.b_only, c.a_only);
  c.significant = c.p_value < 0.05;
  c.ci_overlap = !(c.ci_a.hi < c.ci_b.lo || c.ci_b.hi < c.ci_a.lo);
  return c;
}

std::string comparison_text(const PairedComparison& c) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%s: %.4f [%.4f, %.4f]\n",
                c.method_a.c_str(), c.rate_a, c.ci_a.lo, c.ci_a.hi);
  out << line;
  std::snprintf(line, sizeof line, "%s: %.4f [%.4f, %.4f]\n",
                c.method_b.c_str(), c.rate_b, c.ci_b.lo, c.ci_b.hi);
  out << line;
  std::snprintf(line, sizeof line,
                "delta %.4f over %d paired shots; discordant %d/%d; "
                "McNemar p = %.6f (%s%s)\n",
                c.delta, c.n, c.b_only, c.a_only, c.p_value,
                c.significant ? "significant" : "not significant",
                c.ci_overlap ? ", intervals overlap" : "");
  out << line;
  return out.str();
}

void write_map_csv(const std::string& path, const InterceptionMap& map) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "shot_id,target_y,target_z,planar_speed,flight_time,outcome,"
         "chosen_skills,terminal_cause\n";
  char buf[256];
  for (const auto& r : map.records) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%s,%s,%s\n",
                  r.shot_id, r.shot.target_on_goal.x(),
                  r.shot.target_on_goal.y(), r.shot.planar_speed,
                  r.flight_time, r.saved ? "saved" : "missed",
                  r.skills_used.c_str(), outcome_name(r.outcome));
    out << buf;
  }
  if (!out.good()) throw std::runtime_error("short write to " + path);
}

void write_map_jsonl(const std::string& path, const InterceptionMap& map) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json header;
  header["type"] = "header";
  header["method"] = map.method;
  header["seed"] = map.seed;
  header["shot_set_hash"] = map.shot_set_hash;
  header["n"] = map.n();
  header["save_rate"] = map.save_rate();
  out << header.dump() << "\n";
  for (const auto& r : map.records) {
    nlohmann::json j;
    j["type"] = "shot";
    j["shot_id"] = r.shot_id;
    j["launch"] = {r.shot.launch_position.x(), r.shot.launch_position.y(),
                   r.shot.launch_position.z()};
    j["target"] = {r.shot.target_on_goal.x(), r.shot.target_on_goal.y()};
    j["planar_speed"] = r.shot.planar_speed;
    j["flight_time"] = r.flight_time;
    j["outcome"] = r.saved ? "saved" : "missed";
    j["terminal_cause"] = outcome_name(r.outcome);
    j["contacted"] = r.ball_contacted;
    j["envelope_feasible"] = r.envelope_feasible;
    j["skills"] = r.skills_used;
    j["return"] = r.episode_return;
    j["steps"] = r.steps;
    out << j.dump() << "\n";
  }
  if (!out.good()) throw std::runtime_error("short write to " + path);
}

}  // namespace keeper
