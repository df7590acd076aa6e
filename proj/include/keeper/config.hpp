#pragma once

#include <cstdint>
#include <string>

#include "keeper/env.hpp"
#include "keeper/estimation.hpp"
#include "keeper/planners.hpp"
#include "keeper/rl.hpp"

namespace keeper {

// Everything a run needs, resolved to concrete values. Parsing is strict:
// unknown or mistyped keys fail with the full key path, and a config
// round-trips through serialize/parse without loss, so the serialized form
// written next to a run's outputs fully reproduces it.
struct RunConfig {
  std::uint64_t seed = 2024;
  std::string out = "runs/keeper";

  EpisodeConfig episode;       // env, skills, shots, sensor sections
  FilterParams filter;         // sensor.filter
  double filter_nis_reset = 12.0;
  DecodeConfig decode;         // ppo.decode
  ModelBasedConfig model_based;  // eval.model_based
  PpoConfig ppo;

  std::string skill_names = "all";  // ppo.skills, csv subset or "all"
  int train_workers = 1;            // ppo.workers
  int checkpoint_every = 50;        // ppo.checkpoint_every, iterations
  int eval_shots = 200;             // eval.n_shots
  int eval_workers = 1;             // eval.workers
};

// Parses JSON text (comments allowed). Missing keys keep their defaults;
// unknown keys, wrong types, and invalid vocabulary throw std::runtime_error
// naming the key path (e.g. "config error at env.arena.goal_heigth: ...").
RunConfig parse_run_config(const std::string& text);

// Reads and parses a file; a missing or unreadable file names the path.
RunConfig load_run_config(const std::string& path);

// Canonical resolved form: fixed key order, 2-space indent, trailing
// newline. parse(serialize(c)) reproduces c exactly.
std::string serialize_run_config(const RunConfig& c);

// Hash of the canonical serialized form; artifacts embed it so mismatched
// configs are detectable.
std::uint64_t config_hash(const RunConfig& c);
std::string config_hash_hex(const RunConfig& c);

// CLI vocabulary used inside the config file as well.
const char* noise_mode_name(bool noise_enabled);     // "default" / "off"
const char* latch_mode_name(bool strict_latch);      // "learned" / "strict"

// "all", or a comma-separated subset of sidestep/dive/jump (any order,
// spaces tolerated). Unknown names and empty subsets throw
// std::invalid_argument.
SkillTable skill_table_from_csv(const std::string& csv);

}  // namespace keeper
