#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "keeper/eval.hpp"
#include "keeper/rng.hpp"

using keeper::Agent;
using keeper::compare;
using keeper::DecodedPlan;
using keeper::EpisodeConfig;
using keeper::EvalOptions;
using keeper::evaluate;
using keeper::InterceptionMap;
using keeper::mcnemar_exact;
using keeper::Outcome;
using keeper::PlannerAction;
using keeper::region_report;
using keeper::ShotRecord;
using keeper::ShotSpec;
using keeper::wilson_interval;

namespace {

// Never moves: every decision is Stand.
class StandAgent : public Agent {
 public:
  explicit StandAgent(int width) : width_(width) {}
  std::pair<DecodedPlan, PlannerAction> act(const keeper::Episode&) override {
    return {DecodedPlan{}, keeper::stand_action(width_)};
  }

 private:
  int width_;
};

std::unique_ptr<Agent> make_stand() { return std::make_unique<StandAgent>(4); }

ShotRecord synth_record(int id, double ty, double tz, bool saved) {
  ShotRecord r;
  r.shot_id = id;
  r.shot.target_on_goal = {ty, tz};
  r.saved = saved;
  return r;
}

}  // namespace

TEST_CASE("wilson interval matches known values") {
  // 8/10 at 95%: textbook score interval (0.4901, 0.9433).
  const auto w = wilson_interval(8, 10);
  CHECK(w.lo == doctest::Approx(0.4901).epsilon(2e-3));
  CHECK(w.hi == doctest::Approx(0.9433).epsilon(2e-3));

  // Degenerate rates hit the closed-form endpoints z^2/(n+z^2) and n/(n+z^2).
  const double z2 = 1.96 * 1.96;
  const auto zero = wilson_interval(0, 10);
  CHECK(zero.lo == 0.0);
  CHECK(zero.hi == doctest::Approx(z2 / (10 + z2)).epsilon(1e-12));
  const auto full = wilson_interval(10, 10);
  CHECK(full.hi == 1.0);
  CHECK(full.lo == doctest::Approx(10 / (10 + z2)).epsilon(1e-12));

  // The interval always contains the point estimate and tightens with n.
  const auto small = wilson_interval(30, 60);
  const auto large = wilson_interval(300, 600);
  CHECK(small.lo < 0.5);
  CHECK(small.hi > 0.5);
  CHECK(large.hi - large.lo < small.hi - small.lo);

  CHECK_THROWS_AS(wilson_interval(1, 0), std::invalid_argument);
  CHECK_THROWS_AS(wilson_interval(11, 10), std::invalid_argument);
  CHECK_THROWS_AS(wilson_interval(-1, 10), std::invalid_argument);
}

TEST_CASE("exact mcnemar test matches hand-computed binomial tails") {
  // b=1, c=9: 2 * (C(10,0) + C(10,1)) / 2^10 = 22/1024.
  CHECK(mcnemar_exact(1, 9) == doctest::Approx(22.0 / 1024.0).epsilon(1e-9));
  // b=2, c=8: 2 * (1 + 10 + 45) / 1024.
  CHECK(mcnemar_exact(2, 8) == doctest::Approx(112.0 / 1024.0).epsilon(1e-9));
  // Balanced counts overshoot 1 and are capped.
  CHECK(mcnemar_exact(5, 5) == 1.0);
  CHECK(mcnemar_exact(0, 0) == 1.0);
  // One-sided extreme: 2 * 2^-20.
  CHECK(mcnemar_exact(0, 20) == doctest::Approx(std::pow(2.0, -19)).epsilon(1e-9));
  CHECK(mcnemar_exact(3, 11) == doctest::Approx(mcnemar_exact(11, 3)).epsilon(1e-12));
  CHECK_THROWS_AS(mcnemar_exact(-1, 2), std::invalid_argument);
}

TEST_CASE("region report bins shots by target and pools corners") {
  InterceptionMap map;
  map.records.push_back(synth_record(0, -0.6, 0.10, true));   // low left
  map.records.push_back(synth_record(1, 0.0, 0.45, true));    // mid center
  map.records.push_back(synth_record(2, 0.6, 0.85, false));   // top right
  map.records.push_back(synth_record(3, 0.75, 0.90, true));   // clamps to top right
  map.records.push_back(synth_record(4, -0.75, 0.30, false)); // boundary: mid left
  map.records.push_back(synth_record(5, 0.7, 0.05, false));   // low right

  const auto rep = region_report(map);
  CHECK(rep.count[0][0] == 1);
  CHECK(rep.count[1][1] == 1);
  CHECK(rep.count[2][2] == 2);
  CHECK(rep.count[1][0] == 1);  // z = 0.3 sits on the row boundary, rounds up
  CHECK(rep.count[0][2] == 1);
  CHECK(rep.rate(0, 0) == 1.0);
  CHECK(rep.rate(2, 2) == 0.5);
  CHECK(std::isnan(rep.rate(2, 0)));  // empty cell
  CHECK(rep.lower_corner_count() == 2);
  CHECK(rep.lower_corner_rate() == 0.5);
  CHECK(rep.row_rate(0) == 0.5);

  const std::string text = keeper::region_text(rep);
  CHECK(text.find("low") != std::string::npos);
  CHECK(text.find("-") != std::string::npos);

  CHECK_THROWS_AS(region_report(InterceptionMap{}), std::domain_error);
}

TEST_CASE("an all-saved map rates every populated cell at one") {
  InterceptionMap map;
  keeper::Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    map.records.push_back(synth_record(i, rng.uniform(-0.75, 0.75),
                                       rng.uniform(0.0, 0.9), true));
  }
  const auto rep = region_report(map);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (rep.count[r][c] > 0) CHECK(rep.rate(r, c) == 1.0);
    }
  }
  CHECK(map.save_rate() == 1.0);
}

TEST_CASE("evaluation is deterministic and worker-count invariant") {
  EpisodeConfig cfg;
  const auto a = evaluate(cfg, "stand", make_stand, 12, 404);
  const auto b = evaluate(cfg, "stand", make_stand, 12, 404);
  EvalOptions three;
  three.workers = 3;
  const auto c = evaluate(cfg, "stand", make_stand, 12, 404, three);

  REQUIRE(a.n() == 12);
  CHECK(a.shot_set_hash == b.shot_set_hash);
  CHECK(a.shot_set_hash == c.shot_set_hash);
  for (int i = 0; i < 12; ++i) {
    CHECK(a.records[i].shot_id == i);
    CHECK(a.records[i].saved == b.records[i].saved);
    CHECK(a.records[i].saved == c.records[i].saved);
    CHECK(a.records[i].outcome == c.records[i].outcome);
    CHECK((a.records[i].shot.launch_position -
           c.records[i].shot.launch_position)
              .norm() == 0.0);
    CHECK(a.records[i].steps >= 1);
    CHECK(a.records[i].flight_time > 0.0);
  }
  // A different seed draws a different shot set.
  const auto d = evaluate(cfg, "stand", make_stand, 12, 405);
  CHECK(d.shot_set_hash != a.shot_set_hash);

  CHECK_THROWS_AS(evaluate(cfg, "stand", make_stand, 0, 1),
                  std::invalid_argument);
  CHECK(evaluate(cfg, "stand", make_stand, 1, 1).n() == 1);
}

TEST_CASE("standing still concedes most on-target shots") {
  EpisodeConfig cfg;
  const auto map = evaluate(cfg, "stand", make_stand, 40, 11);
  int goals = 0;
  for (const auto& r : map.records) {
    if (r.outcome == Outcome::Goal) ++goals;
    CHECK(r.steps >= 1);
  }
  CHECK(goals > 20);
  CHECK(map.save_rate() < 0.5);
}

TEST_CASE("shot sets stay paired across agents and noise settings") {
  EpisodeConfig noisy;
  EpisodeConfig clean;
  clean.noise_enabled = false;

  const auto stand_map = evaluate(noisy, "stand", make_stand, 15, 777);
  const auto mb_map = evaluate(
      clean, "model-based",
      [&] {
        return std::make_unique<keeper::ModelBasedAgent>(
            clean, keeper::FilterParams{}, keeper::ModelBasedConfig{});
      },
      15, 777);
  CHECK(stand_map.shot_set_hash == mb_map.shot_set_hash);
  for (int i = 0; i < 15; ++i) {
    CHECK((stand_map.records[i].shot.launch_position -
           mb_map.records[i].shot.launch_position)
              .norm() == 0.0);
    CHECK(stand_map.records[i].shot.planar_speed ==
          mb_map.records[i].shot.planar_speed);
  }
}

TEST_CASE("the model-based baseline saves shots a stander concedes") {
  EpisodeConfig clean;
  clean.noise_enabled = false;
  auto make_mb = [&] {
    return std::make_unique<keeper::ModelBasedAgent>(
        clean, keeper::FilterParams{}, keeper::ModelBasedConfig{});
  };
  const auto mb = evaluate(clean, "model-based", make_mb, 30, 2025);
  const auto stand = evaluate(clean, "stand", make_stand, 30, 2025);
  REQUIRE(mb.n() == 30);
  CHECK(mb.save_rate() > stand.save_rate());
  CHECK(mb.save_rate() > 0.5);
  // Skill usage is reported for episodes where the baseline moved.
  bool any_skill = false;
  for (const auto& r : mb.records) any_skill |= !r.skills_used.empty();
  CHECK(any_skill);
}

TEST_CASE("envelope feasibility follows the flight geometry") {
  EpisodeConfig cfg;
  // Straight at the keeper, waist height: well inside the dive envelope.
  ShotSpec center;
  center.launch_position = {4.0, 0.0, 0.3};
  center.target_on_goal = {0.0, 0.45};
  center.planar_speed = 6.0;
  CHECK(keeper::envelope_feasible(center, cfg));

  // Hugging the +y post at the crossbar from a wide launch: the path stays
  // outside every reachable box all the way in.
  ShotSpec corner;
  corner.launch_position = {4.0, 1.0, 0.5};
  corner.target_on_goal = {0.75, 0.89};
  corner.planar_speed = 8.0;
  CHECK(!keeper::envelope_feasible(corner, cfg));
}

TEST_CASE("paired comparison reports discordance and refuses foreign maps") {
  EpisodeConfig cfg;
  const auto a = evaluate(cfg, "stand", make_stand, 10, 5);
  const auto b = evaluate(cfg, "stand", make_stand, 10, 5);
  const auto self = compare(a, b);
  CHECK(self.delta == 0.0);
  CHECK(self.b_only == 0);
  CHECK(self.a_only == 0);
  CHECK(self.p_value == 1.0);
  CHECK(!self.significant);
  CHECK(self.ci_overlap);

  const auto other = evaluate(cfg, "stand", make_stand, 10, 6);
  CHECK_THROWS_AS(compare(a, other), std::domain_error);

  // Hand-built discordance: b saves 9 shots a misses, a saves 1 b misses.
  InterceptionMap ma;
  InterceptionMap mb;
  ma.method = "a";
  mb.method = "b";
  ma.shot_set_hash = mb.shot_set_hash = 42;
  for (int i = 0; i < 20; ++i) {
    const bool sa = i == 0;           // a saves only shot 0
    const bool sb = i >= 1 && i <= 9; // b saves shots 1..9
    ma.records.push_back(synth_record(i, 0.0, 0.45, sa));
    mb.records.push_back(synth_record(i, 0.0, 0.45, sb));
  }
  const auto c = compare(ma, mb);
  CHECK(c.b_only == 9);
  CHECK(c.a_only == 1);
  CHECK(c.p_value == doctest::Approx(22.0 / 1024.0).epsilon(1e-9));
  CHECK(c.significant);
  CHECK(c.delta == doctest::Approx(8.0 / 20.0).epsilon(1e-12));
  const std::string text = keeper::comparison_text(c);
  CHECK(text.find("McNemar") != std::string::npos);
}

TEST_CASE("a wrongly shaped network is refused before any episode runs") {
  keeper::Rng rng(1);
  keeper::PolicyNetwork bad(10, 4, 12, {8}, 0.0, -0.5, rng);  // obs_dim wrong
  CHECK_THROWS_AS(keeper::GreedyPolicyAgent(bad, keeper::SkillTable{},
                                            keeper::DecodeConfig{}),
                  std::domain_error);

  keeper::ObservationLayout layout;
  keeper::PolicyNetwork good(layout.dim(), 4, 12, {8}, 2.0, -0.5, rng);
  EpisodeConfig cfg;
  const auto map = evaluate(
      cfg, "greedy",
      [&] {
        return std::make_unique<keeper::GreedyPolicyAgent>(
            good, keeper::SkillTable{}, keeper::DecodeConfig{});
      },
      5, 99);
  CHECK(map.n() == 5);
  const auto again = evaluate(
      cfg, "greedy",
      [&] {
        return std::make_unique<keeper::GreedyPolicyAgent>(
            good, keeper::SkillTable{}, keeper::DecodeConfig{});
      },
      5, 99);
  for (int i = 0; i < 5; ++i) {
    CHECK(map.records[i].saved == again.records[i].saved);
    CHECK(map.records[i].episode_return == again.records[i].episode_return);
  }
}

TEST_CASE("map files round-trip through csv and jsonl") {
  EpisodeConfig cfg;
  const auto map = evaluate(cfg, "stand", make_stand, 8, 17);
  const auto dir = std::filesystem::temp_directory_path();
  const auto csv = (dir / "keeper_test_map.csv").string();
  const auto jsonl = (dir / "keeper_test_map.jsonl").string();

  keeper::write_map_csv(csv, map);
  std::ifstream cin_(csv);
  std::string line;
  std::getline(cin_, line);
  CHECK(line ==
        "shot_id,target_y,target_z,planar_speed,flight_time,outcome,"
        "chosen_skills,terminal_cause");
  int rows = 0;
  while (std::getline(cin_, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 8);

  keeper::write_map_jsonl(jsonl, map);
  std::ifstream jin(jsonl);
  std::getline(jin, line);
  const auto header = nlohmann::json::parse(line);
  CHECK(header.at("type") == "header");
  CHECK(header.at("n") == 8);
  CHECK(header.at("shot_set_hash").get<std::uint64_t>() == map.shot_set_hash);
  int shots = 0;
  while (std::getline(jin, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("type") == "shot");
    CHECK(j.at("shot_id").get<int>() == shots);
    ++shots;
  }
  CHECK(shots == 8);

  std::remove(csv.c_str());
  std::remove(jsonl.c_str());

  CHECK_THROWS_AS(keeper::write_map_csv("/nonexistent/dir/map.csv", map),
                  std::runtime_error);
}

TEST_CASE("the replay hook fires once per shot in order") {
  EpisodeConfig cfg;
  EvalOptions opts;
  opts.record = true;
  opts.workers = 2;
  std::vector<int> ids;
  opts.on_episode = [&](int id, const keeper::Episode& ep) {
    ids.push_back(id);
    CHECK(!ep.replay().empty());
    CHECK(ep.done());
  };
  const auto map = evaluate(cfg, "stand", make_stand, 6, 23, opts);
  REQUIRE(ids.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(ids[i] == i);
  CHECK(map.n() == 6);
}
