#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "keeper/config.hpp"

using keeper::RunConfig;
using keeper::SkillKind;

namespace {

// Message of the runtime_error a parse is expected to throw.
std::string error_of(const std::string& text) {
  try {
    keeper::parse_run_config(text);
  } catch (const std::runtime_error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty config yields the built-in defaults") {
  const RunConfig c = keeper::parse_run_config("{}");
  CHECK(c.seed == 2024);
  CHECK(c.out == "runs/keeper");
  CHECK(c.episode.planner_steps == 90);
  CHECK(c.episode.substeps_per_decision == 3);
  CHECK(c.episode.noise_enabled);
  CHECK(!c.episode.strict_latch);
  CHECK(c.episode.arena.goal_half_width == 0.75);
  CHECK(c.episode.skills.dive.lateral_reach == 0.80);
  CHECK(c.episode.shots.planar_speed[1] == 8.0);
  CHECK(c.filter.measurement_std == 0.05);
  CHECK(c.filter_nis_reset == 12.0);
  CHECK(c.ppo.n_envs == 16);
  CHECK(c.ppo.hidden == std::vector<int>{256, 128});
  CHECK(c.decode.delta_scale.y() == 0.9);
  CHECK(c.model_based.commit_horizon == 0.6);
  CHECK(c.skill_names == "all");
  CHECK(c.eval_shots == 200);
}

TEST_CASE("partial override keeps unrelated defaults") {
  const RunConfig c = keeper::parse_run_config(R"({
    "seed": 7,
    "env": {"arena": {"goal_height": 1.2}, "noise": "off"},
    "ppo": {"iterations": 3, "skills": "dive, jump"}
  })");
  CHECK(c.seed == 7);
  CHECK(c.episode.arena.goal_height == 1.2);
  CHECK(c.episode.arena.goal_half_width == 0.75);
  CHECK(!c.episode.noise_enabled);
  CHECK(c.ppo.iterations == 3);
  CHECK(c.ppo.gamma == 0.99);
  CHECK(c.skill_names == "dive, jump");
  const auto table = keeper::skill_table_from_csv(c.skill_names);
  CHECK(table.size() == 3);
  CHECK(table.kinds[1] == SkillKind::Dive);
  CHECK(table.kinds[2] == SkillKind::Jump);
}

TEST_CASE("unknown keys are rejected with their full path") {
  CHECK(error_of(R"({"env": {"arena": {"goal_heigth": 1.0}}})") ==
        "config error at env.arena.goal_heigth: unknown key");
  CHECK(error_of(R"({"speed": 3})") == "config error at speed: unknown key");
  CHECK(error_of(R"({"ppo": {"decode": {"scale": []}}})") ==
        "config error at ppo.decode.scale: unknown key");
}

TEST_CASE("type errors name the key and the expected shape") {
  CHECK(error_of(R"({"seed": -1})") ==
        "config error at seed: expected a nonnegative integer");
  CHECK(error_of(R"({"env": {"planner_steps": 2.5}})") ==
        "config error at env.planner_steps: expected an integer");
  CHECK(error_of(R"({"env": {"goal_termination": "yes"}})") ==
        "config error at env.goal_termination: expected true or false");
  CHECK(error_of(R"({"shots": {"target_y": [1, 2, 3]}})") ==
        "config error at shots.target_y: expected [lo, hi]");
  CHECK(error_of(R"({"ppo": {"decode": {"delta_scale": [1, 2]}}})") ==
        "config error at ppo.decode.delta_scale: expected [x, y, z]");
  CHECK(error_of(R"({"ppo": {"hidden": []}})") ==
        "config error at ppo.hidden: expected a nonempty integer array");
  CHECK(error_of(R"({"env": "fast"})") ==
        "config error at env: expected an object");
}

TEST_CASE("vocabulary keys accept only their two words") {
  CHECK(keeper::parse_run_config(R"({"env": {"noise": "default"}})")
            .episode.noise_enabled);
  CHECK(keeper::parse_run_config(R"({"env": {"latch": "strict"}})")
            .episode.strict_latch);
  CHECK(error_of(R"({"env": {"noise": "on"}})") ==
        "config error at env.noise: expected \"default\" or \"off\"");
  CHECK(error_of(R"({"env": {"latch": true}})") ==
        "config error at env.latch: expected a string");
  CHECK(error_of(R"({"ppo": {"skills": "dive,flip"}})") ==
        "config error at ppo.skills: unknown skill: flip");
  CHECK(error_of(R"({"ppo": {"skills": "dive,,jump"}})") ==
        "config error at ppo.skills: empty skill name in \"dive,,jump\"");
}

TEST_CASE("serialized form round-trips losslessly") {
  RunConfig c;
  c.seed = 0xDEADBEEFCAFEF00DULL;
  c.out = "runs/exp3";
  c.episode.control_dt = 1.0 / 30.0;
  c.episode.noise_enabled = false;
  c.episode.strict_latch = true;
  c.episode.shots.target_y = {-0.5, 0.5};
  c.episode.skills.jump.z_max = 1.05;
  c.filter.process_vel_std2 = 3e-5;
  c.decode.delta_scale = keeper::Vec3{0.4, 0.8, 0.45};
  c.ppo.learning_rate = 2.5e-4;
  c.ppo.hidden = {64, 32};
  c.skill_names = "sidestep,dive";
  c.eval_shots = 500;

  const std::string text = keeper::serialize_run_config(c);
  const RunConfig back = keeper::parse_run_config(text);
  CHECK(keeper::serialize_run_config(back) == text);
  CHECK(back.seed == c.seed);
  CHECK(back.episode.control_dt == c.episode.control_dt);
  CHECK(back.episode.strict_latch);
  CHECK(back.filter.process_vel_std2 == 3e-5);
  CHECK(back.decode.delta_scale == c.decode.delta_scale);
  CHECK(back.ppo.hidden == c.ppo.hidden);
  CHECK(back.skill_names == "sidestep,dive");
  CHECK(keeper::config_hash(back) == keeper::config_hash(c));
}

TEST_CASE("hash distinguishes configs and ignores formatting") {
  RunConfig a;
  RunConfig b;
  CHECK(keeper::config_hash(a) == keeper::config_hash(b));
  b.ppo.learning_rate = 3.1e-4;
  CHECK(keeper::config_hash(a) != keeper::config_hash(b));
  // Whitespace and key order in the input never reach the hash.
  const RunConfig c1 = keeper::parse_run_config(R"({"seed":5,"out":"x"})");
  const RunConfig c2 = keeper::parse_run_config(
      "{\n  \"out\": \"x\",\n  \"seed\": 5\n}\n");
  CHECK(keeper::config_hash(c1) == keeper::config_hash(c2));
  CHECK(keeper::config_hash_hex(c1).size() == 16);
}

TEST_CASE("comments are allowed in config files") {
  const RunConfig c = keeper::parse_run_config(R"({
    // experiment 12: narrow goal
    "env": {"arena": {"goal_half_width": 0.6}} /* rest as shipped */
  })");
  CHECK(c.episode.arena.goal_half_width == 0.6);
}

TEST_CASE("malformed json reports a parse error, not a crash") {
  const std::string msg = error_of("{\"seed\": }");
  CHECK(msg.substr(0, 13) == "config error:");
}

TEST_CASE("loading names the file when it cannot be read") {
  try {
    keeper::load_run_config("/nonexistent/keeper.json");
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) ==
          "config error: cannot read /nonexistent/keeper.json");
  }
}

TEST_CASE("loading a file matches parsing its text") {
  RunConfig c;
  c.seed = 99;
  c.episode.sensor.delay_max = 0.12;
  const std::string text = keeper::serialize_run_config(c);
  const std::string path = "test_config_roundtrip.json";
  {
    std::ofstream out(path);
    out << text;
  }
  const RunConfig back = keeper::load_run_config(path);
  std::remove(path.c_str());
  CHECK(back.seed == 99);
  CHECK(back.episode.sensor.delay_max == 0.12);
  CHECK(keeper::config_hash(back) == keeper::config_hash(c));
}
