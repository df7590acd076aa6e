#include "keeper/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

#include "keeper/rng.hpp"

namespace keeper {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("config error at " + path + ": " + what);
}

// Strict object walker: every key read is marked handled, and finish()
// rejects whatever remains, so typos surface with their full path instead of
// being silently ignored. Missing keys keep the caller's defaults.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j_->is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  void get(const char* key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) fail(at(key), "expected a number");
      out = v->get<double>();
    }
  }

  void get(const char* key, int& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer()) fail(at(key), "expected an integer");
      out = v->get<int>();
    }
  }

  void get(const char* key, std::uint64_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned() &&
          !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        fail(at(key), "expected a nonnegative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }

  void get(const char* key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) fail(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void get(const char* key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) fail(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void get(const char* key, std::array<double, 2>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array() || v->size() != 2) fail(at(key), "expected [lo, hi]");
      for (int i = 0; i < 2; ++i) {
        if (!(*v)[i].is_number()) fail(at(key), "expected [lo, hi]");
        out[static_cast<size_t>(i)] = (*v)[i].get<double>();
      }
    }
  }

  void get(const char* key, Vec3& out) {
    if (const Json* v = find(key)) {
      read_vec3(*v, at(key), out);
    }
  }

  void get(const char* key, std::array<Vec3, 4>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array() || v->size() != 4) {
        fail(at(key), "expected 4 points of [x, y, z]");
      }
      for (size_t i = 0; i < 4; ++i) read_vec3((*v)[i], at(key), out[i]);
    }
  }

  void get(const char* key, std::vector<int>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array() || v->empty()) {
        fail(at(key), "expected a nonempty integer array");
      }
      std::vector<int> vals;
      for (const Json& e : *v) {
        if (!e.is_number_integer()) {
          fail(at(key), "expected a nonempty integer array");
        }
        vals.push_back(e.get<int>());
      }
      out = std::move(vals);
    }
  }

  // Maps a two-word vocabulary onto a bool; `when_true` selects true.
  void get_choice(const char* key, bool& out, const char* when_true,
                  const char* when_false) {
    std::string s = out ? when_true : when_false;
    get(key, s);
    if (s == when_true) {
      out = true;
    } else if (s == when_false) {
      out = false;
    } else {
      fail(at(key), std::string("expected \"") + when_true + "\" or \"" +
                        when_false + "\"");
    }
  }

  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    if (const Json* v = find(key)) {
      Reader r(*v, at(key));
      fn(r);
      r.finish();
    }
  }

  void finish() const {
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (!handled_.count(it.key())) fail(at(it.key()), "unknown key");
    }
  }

 private:
  std::string at(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  static void read_vec3(const Json& v, const std::string& path, Vec3& out) {
    if (!v.is_array() || v.size() != 3) fail(path, "expected [x, y, z]");
    for (int i = 0; i < 3; ++i) {
      if (!v[static_cast<size_t>(i)].is_number()) fail(path, "expected [x, y, z]");
      out(i) = v[static_cast<size_t>(i)].get<double>();
    }
  }

  const Json* find(const char* key) {
    handled_.insert(key);
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  const Json* j_;
  std::string path_;
  std::set<std::string, std::less<>> handled_;
};

void read_envelope(Reader& r, const char* key, SkillEnvelope& e) {
  r.section(key, [&](Reader& s) {
    s.get("lateral_reach", e.lateral_reach);
    s.get("z_min", e.z_min);
    s.get("z_max", e.z_max);
    s.get("tracking_noise_std", e.tracking_noise_std);
  });
}

Json vec3_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Json tail_json(const std::array<Vec3, 4>& tail) {
  Json a = Json::array();
  for (const Vec3& p : tail) a.push_back(vec3_json(p));
  return a;
}

Json range_json(const std::array<double, 2>& r) {
  return Json::array({r[0], r[1]});
}

}  // namespace

SkillTable skill_table_from_csv(const std::string& csv) {
  std::vector<std::string> names;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) {
      throw std::invalid_argument("empty skill name in \"" + csv + "\"");
    }
    names.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return SkillTable::from_names(names);
}

const char* noise_mode_name(bool noise_enabled) {
  return noise_enabled ? "default" : "off";
}

const char* latch_mode_name(bool strict_latch) {
  return strict_latch ? "strict" : "learned";
}

RunConfig parse_run_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text, nullptr, /*allow_exceptions=*/true,
                    /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(std::string("config error: ") + e.what());
  }

  RunConfig c;
  Reader root(j, "");
  root.get("seed", c.seed);
  root.get("out", c.out);

  root.section("env", [&](Reader& r) {
    EpisodeConfig& e = c.episode;
    r.get("planner_steps", e.planner_steps);
    r.get("substeps_per_decision", e.substeps_per_decision);
    r.get("control_dt", e.control_dt);
    r.get("release_max", e.release_max);
    r.get_choice("noise", e.noise_enabled, "default", "off");
    r.get_choice("latch", e.strict_latch, "strict", "learned");
    r.get("goal_termination", e.goal_termination);
    r.section("arena", [&](Reader& a) {
      a.get("goal_half_width", e.arena.goal_half_width);
      a.get("goal_height", e.arena.goal_height);
      a.get("robot_start_x", e.arena.robot_start_x);
      a.get("clear_x", e.arena.clear_x);
    });
    r.section("ground", [&](Reader& g) {
      g.get("ball_radius", e.ground.ball_radius);
      g.get("restitution", e.ground.restitution);
      g.get("tangential_retention", e.ground.tangential_retention);
      g.get("settle_speed", e.ground.settle_speed);
    });
    r.section("contact", [&](Reader& k) {
      k.get("radius", e.contact.radius);
      k.get("stop_speed_max", e.contact.stop_speed_max);
      k.get("restitution", e.contact.restitution);
      k.get("tangential_damping", e.contact.tangential_damping);
    });
    r.section("reward", [&](Reader& w) {
      w.get("gate_distance", e.reward.gate_distance);
      w.get("stop_speed", e.reward.stop_speed);
      w.get("w_stop", e.reward.w_stop);
      w.get("w_proximity", e.reward.w_proximity);
      w.get("w_curve", e.reward.w_curve);
      w.get("w_regularizer", e.reward.w_regularizer);
      w.get("rho_position", e.reward.rho_position);
      w.get("rho_alpha", e.reward.rho_alpha);
    });
  });

  root.section("skills", [&](Reader& r) {
    SkillSet& s = c.episode.skills;
    r.get("duration", s.duration);
    r.get("sagittal_min", s.sagittal_min);
    r.get("sagittal_max", s.sagittal_max);
    r.get("fall_margin", s.fall_margin);
    r.get("fall_check_min_phase", s.fall_check_min_phase);
    read_envelope(r, "sidestep", s.sidestep);
    read_envelope(r, "dive", s.dive);
    read_envelope(r, "jump", s.jump);
  });

  root.section("shots", [&](Reader& r) {
    ShotDistribution& d = c.episode.shots;
    r.get("launch_x", d.launch_x);
    r.get("launch_y", d.launch_y);
    r.get("launch_z", d.launch_z);
    r.get("target_y", d.target_y);
    r.get("target_z", d.target_z);
    r.get("planar_speed", d.planar_speed);
  });

  root.section("sensor", [&](Reader& r) {
    r.get("noise_std", c.episode.sensor.noise_std);
    r.get("delay_min", c.episode.sensor.delay_min);
    r.get("delay_max", c.episode.sensor.delay_max);
    r.section("filter", [&](Reader& f) {
      f.get("measurement_std", c.filter.measurement_std);
      f.get("process_vel_std2", c.filter.process_vel_std2);
      f.get("nis_reset", c.filter_nis_reset);
    });
  });

  root.section("ppo", [&](Reader& r) {
    PpoConfig& p = c.ppo;
    r.get("gamma", p.gamma);
    r.get("lambda", p.lambda);
    r.get("clip", p.clip);
    r.get("learning_rate", p.learning_rate);
    r.get("lr_linear_decay", p.lr_linear_decay);
    r.get("epochs", p.epochs);
    r.get("minibatch", p.minibatch);
    r.get("entropy_coef", p.entropy_coef);
    r.get("value_coef", p.value_coef);
    r.get("grad_clip", p.grad_clip);
    r.get("rollout_steps", p.rollout_steps);
    r.get("n_envs", p.n_envs);
    r.get("iterations", p.iterations);
    r.get("hidden", p.hidden);
    r.get("log_std_init", p.log_std_init);
    r.get("log_std_min", p.log_std_min);
    r.get("log_std_max", p.log_std_max);
    r.get("stand_bias", p.stand_bias);
    r.get("skills", c.skill_names);
    r.get("workers", c.train_workers);
    r.get("checkpoint_every", c.checkpoint_every);
    r.section("decode", [&](Reader& d) {
      d.get("delta_scale", c.decode.delta_scale);
      d.get("workspace_min", c.decode.workspace_min);
      d.get("workspace_max", c.decode.workspace_max);
      d.get("nominal_start", c.decode.nominal_start);
      d.get("duration", c.decode.duration);
      d.get("sidestep_tail", c.decode.sidestep_tail);
      d.get("dive_tail", c.decode.dive_tail);
      d.get("jump_tail", c.decode.jump_tail);
    });
  });

  root.section("eval", [&](Reader& r) {
    r.get("n_shots", c.eval_shots);
    r.get("workers", c.eval_workers);
    r.section("model_based", [&](Reader& m) {
      ModelBasedConfig& b = c.model_based;
      m.get("reach_plane_x", b.reach_plane_x);
      m.get("reach_plane_min", b.reach_plane_min);
      m.get("contact_reach", b.contact_reach);
      m.get("commit_horizon", b.commit_horizon);
      m.get("min_hit_time", b.min_hit_time);
      m.get("sidestep_abs_y", b.sidestep_abs_y);
      m.get("predict_horizon", b.predict_horizon);
    });
  });

  root.finish();

  try {
    skill_table_from_csv(c.skill_names);
  } catch (const std::exception& e) {
    fail("ppo.skills", e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config error: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& c) {
  const EpisodeConfig& e = c.episode;
  Json j;
  j["seed"] = c.seed;
  j["out"] = c.out;

  Json& env = j["env"] = Json::object();
  env["planner_steps"] = e.planner_steps;
  env["substeps_per_decision"] = e.substeps_per_decision;
  env["control_dt"] = e.control_dt;
  env["release_max"] = e.release_max;
  env["noise"] = noise_mode_name(e.noise_enabled);
  env["latch"] = latch_mode_name(e.strict_latch);
  env["goal_termination"] = e.goal_termination;
  env["arena"] = {{"goal_half_width", e.arena.goal_half_width},
                  {"goal_height", e.arena.goal_height},
                  {"robot_start_x", e.arena.robot_start_x},
                  {"clear_x", e.arena.clear_x}};
  env["ground"] = {{"ball_radius", e.ground.ball_radius},
                   {"restitution", e.ground.restitution},
                   {"tangential_retention", e.ground.tangential_retention},
                   {"settle_speed", e.ground.settle_speed}};
  env["contact"] = {{"radius", e.contact.radius},
                    {"stop_speed_max", e.contact.stop_speed_max},
                    {"restitution", e.contact.restitution},
                    {"tangential_damping", e.contact.tangential_damping}};
  env["reward"] = {{"gate_distance", e.reward.gate_distance},
                   {"stop_speed", e.reward.stop_speed},
                   {"w_stop", e.reward.w_stop},
                   {"w_proximity", e.reward.w_proximity},
                   {"w_curve", e.reward.w_curve},
                   {"w_regularizer", e.reward.w_regularizer},
                   {"rho_position", e.reward.rho_position},
                   {"rho_alpha", e.reward.rho_alpha}};

  auto envelope_json = [](const SkillEnvelope& s) {
    return Json{{"lateral_reach", s.lateral_reach},
                {"z_min", s.z_min},
                {"z_max", s.z_max},
                {"tracking_noise_std", s.tracking_noise_std}};
  };
  j["skills"] = {{"duration", e.skills.duration},
                 {"sagittal_min", e.skills.sagittal_min},
                 {"sagittal_max", e.skills.sagittal_max},
                 {"fall_margin", e.skills.fall_margin},
                 {"fall_check_min_phase", e.skills.fall_check_min_phase},
                 {"sidestep", envelope_json(e.skills.sidestep)},
                 {"dive", envelope_json(e.skills.dive)},
                 {"jump", envelope_json(e.skills.jump)}};

  j["shots"] = {{"launch_x", range_json(e.shots.launch_x)},
                {"launch_y", range_json(e.shots.launch_y)},
                {"launch_z", range_json(e.shots.launch_z)},
                {"target_y", range_json(e.shots.target_y)},
                {"target_z", range_json(e.shots.target_z)},
                {"planar_speed", range_json(e.shots.planar_speed)}};

  j["sensor"] = {{"noise_std", e.sensor.noise_std},
                 {"delay_min", e.sensor.delay_min},
                 {"delay_max", e.sensor.delay_max},
                 {"filter", Json{{"measurement_std", c.filter.measurement_std},
                                 {"process_vel_std2", c.filter.process_vel_std2},
                                 {"nis_reset", c.filter_nis_reset}}}};

  Json& ppo = j["ppo"] = Json::object();
  ppo["gamma"] = c.ppo.gamma;
  ppo["lambda"] = c.ppo.lambda;
  ppo["clip"] = c.ppo.clip;
  ppo["learning_rate"] = c.ppo.learning_rate;
  ppo["lr_linear_decay"] = c.ppo.lr_linear_decay;
  ppo["epochs"] = c.ppo.epochs;
  ppo["minibatch"] = c.ppo.minibatch;
  ppo["entropy_coef"] = c.ppo.entropy_coef;
  ppo["value_coef"] = c.ppo.value_coef;
  ppo["grad_clip"] = c.ppo.grad_clip;
  ppo["rollout_steps"] = c.ppo.rollout_steps;
  ppo["n_envs"] = c.ppo.n_envs;
  ppo["iterations"] = c.ppo.iterations;
  ppo["hidden"] = c.ppo.hidden;
  ppo["log_std_init"] = c.ppo.log_std_init;
  ppo["log_std_min"] = c.ppo.log_std_min;
  ppo["log_std_max"] = c.ppo.log_std_max;
  ppo["stand_bias"] = c.ppo.stand_bias;
  ppo["skills"] = c.skill_names;
  ppo["workers"] = c.train_workers;
  ppo["checkpoint_every"] = c.checkpoint_every;
  ppo["decode"] = {{"delta_scale", vec3_json(c.decode.delta_scale)},
                   {"workspace_min", vec3_json(c.decode.workspace_min)},
                   {"workspace_max", vec3_json(c.decode.workspace_max)},
                   {"nominal_start", vec3_json(c.decode.nominal_start)},
                   {"duration", c.decode.duration},
                   {"sidestep_tail", tail_json(c.decode.sidestep_tail)},
                   {"dive_tail", tail_json(c.decode.dive_tail)},
                   {"jump_tail", tail_json(c.decode.jump_tail)}};

  j["eval"] = {
      {"n_shots", c.eval_shots},
      {"workers", c.eval_workers},
      {"model_based", Json{{"reach_plane_x", c.model_based.reach_plane_x},
                           {"reach_plane_min", c.model_based.reach_plane_min},
                           {"contact_reach", c.model_based.contact_reach},
                           {"commit_horizon", c.model_based.commit_horizon},
                           {"min_hit_time", c.model_based.min_hit_time},
                           {"sidestep_abs_y", c.model_based.sidestep_abs_y},
                           {"predict_horizon", c.model_based.predict_horizon}}}};

  return j.dump(2) + "\n";
}

std::uint64_t config_hash(const RunConfig& c) {
  return fnv1a64(serialize_run_config(c));
}

std::string config_hash_hex(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash(c)));
  return std::string(buf);
}

}  // namespace keeper
