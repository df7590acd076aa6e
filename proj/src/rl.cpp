#include "keeper/rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace keeper {

std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<bool>& dones, double last_value, double gamma,
    double lambda) {
  const int n = static_cast<int>(rewards.size());
  if (static_cast<int>(values.size()) != n ||
      static_cast<int>(dones.size()) != n) {
    throw std::invalid_argument("compute_gae: sequence length mismatch");
  }
  std::vector<double> adv(n, 0.0);
  std::vector<double> ret(n, 0.0);
  double next_adv = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    // A terminal transition resets both the bootstrap value and the tail.
    const double next_v =
        dones[t] ? 0.0 : (t + 1 < n ? values[t + 1] : last_value);
    const double tail = (dones[t] || t + 1 >= n) ? 0.0 : next_adv;
    const double delta = rewards[t] + gamma * next_v - values[t];
    next_adv = delta + gamma * lambda * tail;
    adv[t] = next_adv;
    ret[t] = adv[t] + values[t];
  }
  return {std::move(adv), std::move(ret)};
}

void normalize_advantages(std::vector<double>& advantages) {
  if (advantages.empty()) return;
  const double n = static_cast<double>(advantages.size());
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(var / n), 1e-8);
  for (double& a : advantages) a = (a - mean) / sd;
}

MinibatchEval ppo_minibatch(PolicyNetwork& net,
                            const std::vector<Transition>& batch,
                            const std::vector<int>& indices,
                            const std::vector<double>& advantages,
                            const std::vector<double>& returns,
                            const PpoConfig& cfg, bool accumulate_grads) {
  const int m = static_cast<int>(indices.size());
  const int k = net.n_skills();
  const int c = net.n_cont();
  MatrixXd obs(m, net.obs_dim());
  for (int i = 0; i < m; ++i) {
    obs.row(i) = batch[indices[i]].observation.transpose();
  }
  const auto fwd = net.forward(obs, accumulate_grads);
  const VectorXd sigma = net.log_std().array().exp();

  MatrixXd dlogits = MatrixXd::Zero(m, k);
  MatrixXd dmu = MatrixXd::Zero(m, c);
  VectorXd dvalue = VectorXd::Zero(m);
  VectorXd dlog_std = VectorXd::Zero(c);

  double sum_policy = 0.0;
  double sum_value = 0.0;
  double sum_ent_cat = 0.0;
  double sum_kl = 0.0;
  double clipped = 0.0;
  for (int i = 0; i < m; ++i) {
    const Transition& tr = batch[indices[i]];
    const Eigen::RowVectorXd logits = fwd.logits.row(i);
    const Eigen::RowVectorXd mu = fwd.mu.row(i);
    const double new_lp = net.log_prob(logits, mu, tr.skill, tr.pre_squash);
    const double ratio = std::exp(new_lp - tr.log_prob);
    const double a = advantages[indices[i]];
    const double u = ratio * a;
    const double clamped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    // Inside the trust band u equals clamped*a exactly, so the unclipped
    // branch (and its gradient) wins every tie.
    const bool use_u = u <= clamped * a;
    sum_policy -= std::min(u, clamped * a);
    if (std::abs(ratio - 1.0) > cfg.clip) clipped += 1.0;
    sum_kl += tr.log_prob - new_lp;

    const double verr = fwd.value(i) - returns[indices[i]];
    sum_value += verr * verr;

    const double lse = log_sum_exp(logits);
    const Eigen::RowVectorXd p = (logits.array() - lse).exp();
    const double h_cat = net.categorical_entropy(logits);
    sum_ent_cat += h_cat;

    if (accumulate_grads) {
      const double g = use_u ? -a * ratio / m : 0.0;
      dlogits.row(i) = -g * p;
      dlogits(i, tr.skill) += g;
      for (int j = 0; j < k; ++j) {
        dlogits(i, j) +=
            (cfg.entropy_coef / m) * p(j) * ((logits(j) - lse) + h_cat);
      }
      for (int d = 0; d < c; ++d) {
        const double z = (tr.pre_squash(d) - mu(d)) / sigma(d);
        dmu(i, d) = g * z / sigma(d);
        dlog_std(d) += g * (z * z - 1.0);
      }
      dvalue(i) = cfg.value_coef * 2.0 * verr / m;
    }
  }

  MinibatchEval ev;
  ev.policy_loss = sum_policy / m;
  ev.value_loss = sum_value / m;
  ev.entropy_cat = sum_ent_cat / m;
  ev.entropy = ev.entropy_cat + net.gaussian_entropy();
  ev.approx_kl = sum_kl / m;
  ev.clip_fraction = clipped / m;
  ev.total_loss = ev.policy_loss + cfg.value_coef * ev.value_loss -
                  cfg.entropy_coef * ev.entropy;
  ev.finite = std::isfinite(ev.total_loss);
  if (accumulate_grads && ev.finite) {
    // The Gaussian entropy bonus differentiates to a constant per dimension.
    dlog_std.array() -= cfg.entropy_coef;
    net.backward(fwd, dlogits, dmu, dvalue);
    net.grad_log_std() += dlog_std;
  }
  return ev;
}

UpdateStats ppo_update(PolicyNetwork& net, Adam& opt,
                       const std::vector<Transition>& batch,
                       const std::vector<double>& advantages,
                       const std::vector<double>& returns,
                       const PpoConfig& cfg, double lr, Rng& shuffle_rng) {
  const int n = static_cast<int>(batch.size());
  if (static_cast<int>(advantages.size()) != n ||
      static_cast<int>(returns.size()) != n) {
    throw std::invalid_argument("ppo_update: batch length mismatch");
  }
  UpdateStats st;
  const VectorXd params_backup = net.flatten_params();
  const VectorXd m_backup = opt.m();
  const VectorXd v_backup = opt.v();
  const int t_backup = opt.iterations();

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  double weight = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int start = 0; start < n; start += cfg.minibatch) {
      const int len = std::min(cfg.minibatch, n - start);
      const std::vector<int> idx(order.begin() + start,
                                 order.begin() + start + len);
      net.zero_grads();
      const MinibatchEval ev =
          ppo_minibatch(net, batch, idx, advantages, returns, cfg, true);
      VectorXd grads = net.flatten_grads();
      if (!ev.finite || !grads.allFinite()) {
        net.set_params(params_backup);
        opt.restore(m_backup, v_backup, t_backup);
        st.aborted = true;
        st.abort_reason = ev.finite ? "non-finite gradient in minibatch"
                                    : "non-finite loss in minibatch";
        return st;
      }
      clip_grad_norm(grads, cfg.grad_clip);
      VectorXd params = net.flatten_params();
      opt.step(params, grads, lr);
      net.set_params(params);
      net.clamp_log_std(cfg.log_std_min, cfg.log_std_max);

      st.policy_loss += ev.policy_loss * len;
      st.value_loss += ev.value_loss * len;
      st.entropy += ev.entropy * len;
      st.approx_kl += ev.approx_kl * len;
      st.clip_fraction += ev.clip_fraction * len;
      weight += len;
      ++st.minibatches;
    }
  }
  if (weight > 0.0) {
    st.policy_loss /= weight;
    st.value_loss /= weight;
    st.entropy /= weight;
    st.approx_kl /= weight;
    st.clip_fraction /= weight;
  }
  return st;
}

void write_curve_csv(const std::string& path,
                     const std::vector<IterationLog>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration,mean_return,save_rate,clip_fraction,approx_kl,"
         "policy_loss,value_loss,entropy,lr,episodes,env_steps,"
         "update_aborted\n";
  out << std::setprecision(17);
  for (const auto& l : curve) {
    out << l.iteration << ',' << l.mean_return << ',' << l.save_rate << ','
        << l.clip_fraction << ',' << l.approx_kl << ',' << l.policy_loss
        << ',' << l.value_loss << ',' << l.entropy << ',' << l.lr << ','
        << l.episodes << ',' << l.env_steps << ','
        << (l.update_aborted ? 1 : 0) << '\n';
  }
}

namespace {

std::vector<double> to_std(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

VectorXd to_eigen(const std::vector<double>& v) {
  VectorXd out(static_cast<int>(v.size()));
  for (int i = 0; i < out.size(); ++i) out(i) = v[i];
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = "keeper-policy";
  j["version"] = c.version;
  j["layout"] = {{"ball_frames", c.layout.ball_frames},
                 {"robot_frames", c.layout.robot_frames},
                 {"n_skills", c.layout.n_skills},
                 {"n_cont", c.layout.n_cont}};
  j["hidden"] = c.hidden;
  j["skills"] = c.skills;
  j["params"] = to_std(c.params);
  if (c.opt_m.size() > 0) {
    j["optimizer"] = {
        {"t", c.opt_t}, {"m", to_std(c.opt_m)}, {"v", to_std(c.opt_v)}};
  }
  j["progress"] = {{"iteration", c.iteration}, {"env_steps", c.env_steps}};
  j["seed"] = c.seed;
  if (!c.metadata.empty()) j["metadata"] = c.metadata;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Checkpoint c;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != "keeper-policy") {
      throw std::runtime_error("not a policy checkpoint");
    }
    c.version = j.at("version").get<int>();
    if (c.version != 1) {
      throw std::runtime_error("unsupported checkpoint version");
    }
    const auto& lj = j.at("layout");
    c.layout.ball_frames = lj.at("ball_frames").get<int>();
    c.layout.robot_frames = lj.at("robot_frames").get<int>();
    c.layout.n_skills = lj.at("n_skills").get<int>();
    c.layout.n_cont = lj.at("n_cont").get<int>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.skills = j.at("skills").get<std::string>();
    c.params = to_eigen(j.at("params").get<std::vector<double>>());
    if (j.contains("optimizer")) {
      const auto& oj = j.at("optimizer");
      c.opt_t = oj.at("t").get<int>();
      c.opt_m = to_eigen(oj.at("m").get<std::vector<double>>());
      c.opt_v = to_eigen(oj.at("v").get<std::vector<double>>());
    }
    if (j.contains("progress")) {
      c.iteration = j.at("progress").at("iteration").get<int>();
      c.env_steps = j.at("progress").at("env_steps").get<std::int64_t>();
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("metadata")) {
      c.metadata =
          j.at("metadata").get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint parse: ") + e.what());
  }
  return c;
}

PolicyNetwork restore_network(const Checkpoint& c) {
  Rng scratch(0);
  PolicyNetwork net(c.layout.dim(), c.layout.n_skills, c.layout.n_cont,
                    c.hidden, 0.0, 0.0, scratch);
  if (net.param_count() != c.params.size()) {
    throw std::domain_error("checkpoint parameter count mismatch");
  }
  net.set_params(c.params);
  return net;
}

Trainer::Trainer(const EpisodeConfig& env_cfg, const SkillTable& table,
                 const DecodeConfig& decode, const PpoConfig& ppo,
                 std::uint64_t seed, int workers)
    : env_cfg_(env_cfg),
      table_(table),
      decode_(decode),
      cfg_(ppo),
      master_(seed),
      workers_(std::max(1, workers)),
      shuffle_rng_(derive_seed(seed, "shuffle")) {
  if (env_cfg_.n_skills != table_.size()) {
    throw std::invalid_argument(
        "episode action width must match the skill table");
  }
  layout_ = ObservationLayout{};
  layout_.n_skills = table_.size();
  Rng init_rng(derive_seed(seed, "policy-init"));
  net_ = PolicyNetwork(layout_.dim(), table_.size(), layout_.n_cont,
                       cfg_.hidden, cfg_.stand_bias, cfg_.log_std_init,
                       init_rng);
  opt_ = Adam(net_.param_count());
  slots_.reserve(cfg_.n_envs);
  for (int s = 0; s < cfg_.n_envs; ++s) {
    slots_.emplace_back(Rng(derive_seed(seed, "act", s)));
    reset_slot(slots_.back(), s);
  }
}

void Trainer::reset_slot(Slot& slot, int index) {
  // Slot-local episode counters keep seeds independent of worker layout.
  const std::uint64_t id =
      (static_cast<std::uint64_t>(index) << 32) | slot.next_episode++;
  slot.episode.emplace(env_cfg_, derive_seed(master_, "episode", id));
}

void Trainer::collect_slot(Slot& slot, int index) {
  for (int t = 0; t < cfg_.rollout_steps; ++t) {
    Episode& ep = *slot.episode;
    VectorXd obs = encode_observation(ep.observation(), layout_);
    const PolicyNetwork::Sample s = net_.act(obs, slot.act_rng);

    PlannerAction raw;
    raw.skill_probs = VectorXd::Zero(table_.size());
    raw.skill_probs(s.skill) = 1.0;
    raw.deltas = s.action;
    const DecodedPlan plan = decode_action(raw, table_, decode_);

    Transition tr;
    tr.observation = std::move(obs);
    tr.skill = s.skill;
    tr.pre_squash = s.pre_squash;
    tr.log_prob = s.log_prob;
    tr.value = s.value;
    tr.timestep = ep.steps_done();
    const StepResult res = ep.step(plan, raw);
    tr.reward = res.reward;
    tr.done = res.done;
    slot.buffer.push_back(std::move(tr));

    if (res.done) {
      slot.episode_returns.push_back(ep.result().episode_return);
      slot.episode_saved.push_back(ep.result().saved ? 1 : 0);
      reset_slot(slot, index);
    }
  }
  if (slot.buffer.back().done) {
    slot.last_value = 0.0;
  } else {
    const VectorXd obs =
        encode_observation(slot.episode->observation(), layout_);
    MatrixXd row(1, obs.size());
    row.row(0) = obs.transpose();
    slot.last_value = net_.forward(row, false).value(0);
  }
}

std::vector<IterationLog> Trainer::run(
    int n_iterations,
    const std::function<void(const IterationLog&)>& on_iteration) {
  std::vector<IterationLog> curve;
  curve.reserve(n_iterations);
  const int total_for_schedule = std::max(1, cfg_.iterations);
  for (int it = 0; it < n_iterations; ++it) {
    for (auto& slot : slots_) {
      slot.buffer.clear();
      slot.episode_returns.clear();
      slot.episode_saved.clear();
    }
    const int n_slots = static_cast<int>(slots_.size());
    const int n_workers = std::min(workers_, n_slots);
    if (n_workers <= 1) {
      for (int s = 0; s < n_slots; ++s) collect_slot(slots_[s], s);
    } else {
      // Slots are disjoint in buffers and RNG streams and the network is
      // read-only during collection, so any worker count produces identical
      // bits.
      std::vector<std::thread> workers;
      workers.reserve(n_workers);
      for (int w = 0; w < n_workers; ++w) {
        workers.emplace_back([this, w, n_workers, n_slots] {
          const int lo = w * n_slots / n_workers;
          const int hi = (w + 1) * n_slots / n_workers;
          for (int s = lo; s < hi; ++s) collect_slot(slots_[s], s);
        });
      }
      for (auto& th : workers) th.join();
    }

    std::vector<Transition> batch;
    batch.reserve(n_slots * cfg_.rollout_steps);
    std::vector<double> adv_all;
    std::vector<double> ret_all;
    adv_all.reserve(n_slots * cfg_.rollout_steps);
    ret_all.reserve(n_slots * cfg_.rollout_steps);
    double return_sum = 0.0;
    int episodes = 0;
    int saves = 0;
    for (auto& slot : slots_) {
      std::vector<double> rewards;
      std::vector<double> values;
      std::vector<bool> dones;
      rewards.reserve(slot.buffer.size());
      values.reserve(slot.buffer.size());
      dones.reserve(slot.buffer.size());
      for (const auto& tr : slot.buffer) {
        rewards.push_back(tr.reward);
        values.push_back(tr.value);
        dones.push_back(tr.done);
      }
      auto [adv, ret] = compute_gae(rewards, values, dones, slot.last_value,
                                    cfg_.gamma, cfg_.lambda);
      adv_all.insert(adv_all.end(), adv.begin(), adv.end());
      ret_all.insert(ret_all.end(), ret.begin(), ret.end());
      for (auto& tr : slot.buffer) batch.push_back(std::move(tr));
      for (double r : slot.episode_returns) return_sum += r;
      episodes += static_cast<int>(slot.episode_returns.size());
      for (char sflag : slot.episode_saved) saves += sflag;
    }
    normalize_advantages(adv_all);

    const double frac =
        cfg_.lr_linear_decay
            ? std::max(0.0, 1.0 - static_cast<double>(iteration_) /
                                      total_for_schedule)
            : 1.0;
    const double lr = cfg_.learning_rate * frac;
    const UpdateStats st =
        ppo_update(net_, opt_, batch, adv_all, ret_all, cfg_, lr, shuffle_rng_);

    env_steps_ += static_cast<std::int64_t>(n_slots) * cfg_.rollout_steps;
    ++iteration_;

    IterationLog log;
    log.iteration = iteration_;
    log.mean_return = episodes > 0 ? return_sum / episodes : 0.0;
    log.save_rate = episodes > 0 ? static_cast<double>(saves) / episodes : 0.0;
    log.clip_fraction = st.clip_fraction;
    log.approx_kl = st.approx_kl;
    log.policy_loss = st.policy_loss;
    log.value_loss = st.value_loss;
    log.entropy = st.entropy;
    log.lr = lr;
    log.episodes = episodes;
    log.env_steps = env_steps_;
    log.update_aborted = st.aborted;
    curve.push_back(log);
    if (on_iteration) on_iteration(log);
  }
  return curve;
}

Checkpoint Trainer::snapshot(std::map<std::string, std::string> metadata) const {
  Checkpoint c;
  c.layout = layout_;
  c.hidden = cfg_.hidden;
  c.skills = table_.names_csv();
  c.params = net_.flatten_params();
  c.opt_m = opt_.m();
  c.opt_v = opt_.v();
  c.opt_t = opt_.iterations();
  c.iteration = iteration_;
  c.env_steps = env_steps_;
  c.seed = master_;
  c.metadata = std::move(metadata);
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  if (!(c.layout == layout_) || c.hidden != cfg_.hidden ||
      c.skills != table_.names_csv()) {
    throw std::domain_error("checkpoint layout mismatch: refusing to resume");
  }
  if (c.params.size() != net_.param_count()) {
    throw std::domain_error("checkpoint parameter count mismatch");
  }
  net_.set_params(c.params);
  if (c.opt_m.size() > 0) {
    if (c.opt_m.size() != net_.param_count() ||
        c.opt_v.size() != net_.param_count()) {
      throw std::domain_error("checkpoint optimizer state mismatch");
    }
    opt_.restore(c.opt_m, c.opt_v, c.opt_t);
  }
  iteration_ = c.iteration;
  env_steps_ = c.env_steps;
}

}  // namespace keeper
