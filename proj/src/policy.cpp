#include "keeper/policy.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace keeper {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
constexpr double kLog2 = 0.6931471805599453;
double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
}  // namespace

double log_one_minus_tanh_sq(double v) {
  // log(1 - tanh(v)^2) = 2 (log 2 - v - softplus(-2v)); stable for large |v|.
  return 2.0 * (kLog2 - v - softplus(-2.0 * v));
}

double log_sum_exp(const Eigen::RowVectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

PolicyNetwork::PolicyNetwork(int obs_dim, int n_skills, int n_cont,
                             const std::vector<int>& hidden, double stand_bias,
                             double log_std_init, Rng& rng)
    : obs_dim_(obs_dim), n_skills_(n_skills), n_cont_(n_cont), hidden_(hidden) {
  if (obs_dim < 1 || n_skills < 2 || n_cont < 1 || hidden.empty()) {
    throw std::invalid_argument("PolicyNetwork: bad shape");
  }
  std::vector<int> trunk_dims{obs_dim};
  trunk_dims.insert(trunk_dims.end(), hidden.begin(), hidden.end());
  trunk_ = Mlp(trunk_dims, /*activate_last=*/true, rng);

  cat_head_ = LinearLayer(n_skills, hidden.back());
  init_layer(cat_head_, rng, 0.01);
  cat_head_.b(0) = stand_bias;  // survival prior: holding still is safe

  mu_head_ = LinearLayer(n_cont, hidden.back());
  init_layer(mu_head_, rng, 0.01);

  log_std_ = VectorXd::Constant(n_cont, log_std_init);
  grad_log_std_ = VectorXd::Zero(n_cont);

  std::vector<int> critic_dims = trunk_dims;
  critic_dims.push_back(1);
  critic_ = Mlp(critic_dims, /*activate_last=*/false, rng);
}

PolicyNetwork::Forward PolicyNetwork::forward(const MatrixXd& obs,
                                              bool with_cache) const {
  if (obs.cols() != obs_dim_) {
    throw std::domain_error("PolicyNetwork: observation dimension mismatch");
  }
  Forward out;
  // const_cast-free: caches are produced locally and moved out.
  Mlp::Cache trunk_cache, critic_cache;
  out.features = trunk_.forward(obs, with_cache ? &trunk_cache : nullptr);
  out.logits = cat_head_.forward(out.features);
  out.mu = mu_head_.forward(out.features);
  out.value = critic_.forward(obs, with_cache ? &critic_cache : nullptr).col(0);
  out.trunk_cache = std::move(trunk_cache);
  out.critic_cache = std::move(critic_cache);
  return out;
}

void PolicyNetwork::backward(const Forward& fwd, const MatrixXd& dlogits,
                             const MatrixXd& dmu, const VectorXd& dvalue) {
  MatrixXd g_features = cat_head_.backward(fwd.features, dlogits);
  g_features += mu_head_.backward(fwd.features, dmu);
  trunk_.backward(fwd.trunk_cache, g_features);
  critic_.backward(fwd.critic_cache, dvalue);
}

PolicyNetwork::Sample PolicyNetwork::act(const VectorXd& obs, Rng& rng) const {
  const Forward fwd = forward(obs.transpose(), /*with_cache=*/false);
  const Eigen::RowVectorXd logits = fwd.logits.row(0);
  const Eigen::RowVectorXd mu = fwd.mu.row(0);

  // Gumbel-free categorical draw from explicit probabilities.
  const double lse = log_sum_exp(logits);
  const double u = rng.uniform();
  int skill = n_skills_ - 1;
  double acc = 0.0;
  for (int k = 0; k < n_skills_; ++k) {
    acc += std::exp(logits(k) - lse);
    if (u < acc) {
      skill = k;
      break;
    }
  }

  Sample s;
  s.skill = skill;
  s.pre_squash.resize(n_cont_);
  for (int j = 0; j < n_cont_; ++j) {
    s.pre_squash(j) = mu(j) + std::exp(log_std_(j)) * rng.gaussian();
  }
  s.action = s.pre_squash.array().tanh();
  s.log_prob = log_prob(logits, mu, skill, s.pre_squash);
  s.value = fwd.value(0);
  return s;
}

PolicyNetwork::Sample PolicyNetwork::act_greedy(const VectorXd& obs) const {
  const Forward fwd = forward(obs.transpose(), /*with_cache=*/false);
  Sample s;
  fwd.logits.row(0).maxCoeff(&s.skill);
  s.pre_squash = fwd.mu.row(0).transpose();
  s.action = s.pre_squash.array().tanh();
  s.log_prob = log_prob(fwd.logits.row(0), fwd.mu.row(0), s.skill, s.pre_squash);
  s.value = fwd.value(0);
  return s;
}

double PolicyNetwork::log_prob(const Eigen::RowVectorXd& logits,
                               const Eigen::RowVectorXd& mu, int skill,
                               const VectorXd& pre_squash) const {
  if (skill < 0 || skill >= n_skills_) {
    throw std::domain_error("log_prob: skill index out of range");
  }
  double lp = logits(skill) - log_sum_exp(logits);
  for (int j = 0; j < n_cont_; ++j) {
    const double sigma = std::exp(log_std_(j));
    const double z = (pre_squash(j) - mu(j)) / sigma;
    lp += -0.5 * z * z - log_std_(j) - 0.5 * kLog2Pi;
    lp -= log_one_minus_tanh_sq(pre_squash(j));
  }
  return lp;
}

double PolicyNetwork::categorical_entropy(
    const Eigen::RowVectorXd& logits) const {
  const double lse = log_sum_exp(logits);
  double h = 0.0;
  for (int k = 0; k < logits.size(); ++k) {
    const double lp = logits(k) - lse;
    h -= std::exp(lp) * lp;
  }
  return h;
}

double PolicyNetwork::gaussian_entropy() const {
  return log_std_.sum() + 0.5 * n_cont_ * (kLog2Pi + 1.0);
}

namespace {

std::vector<LinearLayer*> collect(Mlp& trunk, LinearLayer& cat,
                                  LinearLayer& mu, Mlp& critic) {
  std::vector<LinearLayer*> out;
  for (auto& l : trunk.layers()) out.push_back(&l);
  out.push_back(&cat);
  out.push_back(&mu);
  for (auto& l : critic.layers()) out.push_back(&l);
  return out;
}

}  // namespace

int PolicyNetwork::param_count() const {
  int n = static_cast<int>(log_std_.size());
  auto count = [&n](const LinearLayer& l) {
    n += static_cast<int>(l.w.size() + l.b.size());
  };
  for (const auto& l : trunk_.layers()) count(l);
  count(cat_head_);
  count(mu_head_);
  for (const auto& l : critic_.layers()) count(l);
  return n;
}

VectorXd PolicyNetwork::flatten_params() const {
  auto* self = const_cast<PolicyNetwork*>(this);
  auto layers = collect(self->trunk_, self->cat_head_, self->mu_head_,
                        self->critic_);
  VectorXd flat(param_count());
  int at = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    const LinearLayer& l = *layers[i];
    for (int r = 0; r < l.w.rows(); ++r)
      for (int c = 0; c < l.w.cols(); ++c) flat(at++) = l.w(r, c);
    for (int r = 0; r < l.b.size(); ++r) flat(at++) = l.b(r);
    if (layers[i] == &self->mu_head_) {
      for (int j = 0; j < log_std_.size(); ++j) flat(at++) = log_std_(j);
    }
  }
  return flat;
}

VectorXd PolicyNetwork::flatten_grads() const {
  auto* self = const_cast<PolicyNetwork*>(this);
  auto layers = collect(self->trunk_, self->cat_head_, self->mu_head_,
                        self->critic_);
  VectorXd flat(param_count());
  int at = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    const LinearLayer& l = *layers[i];
    for (int r = 0; r < l.w.rows(); ++r)
      for (int c = 0; c < l.w.cols(); ++c) flat(at++) = l.grad_w(r, c);
    for (int r = 0; r < l.b.size(); ++r) flat(at++) = l.grad_b(r);
    if (layers[i] == &self->mu_head_) {
      for (int j = 0; j < grad_log_std_.size(); ++j)
        flat(at++) = grad_log_std_(j);
    }
  }
  return flat;
}

void PolicyNetwork::set_params(const VectorXd& flat) {
  if (flat.size() != param_count()) {
    throw std::domain_error("set_params: size mismatch");
  }
  auto layers = collect(trunk_, cat_head_, mu_head_, critic_);
  int at = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    LinearLayer& l = *layers[i];
    for (int r = 0; r < l.w.rows(); ++r)
      for (int c = 0; c < l.w.cols(); ++c) l.w(r, c) = flat(at++);
    for (int r = 0; r < l.b.size(); ++r) l.b(r) = flat(at++);
    if (layers[i] == &mu_head_) {
      for (int j = 0; j < log_std_.size(); ++j) log_std_(j) = flat(at++);
    }
  }
}

void PolicyNetwork::zero_grads() {
  trunk_.zero_grads();
  critic_.zero_grads();
  cat_head_.zero_grads();
  mu_head_.zero_grads();
  grad_log_std_.setZero();
}

void PolicyNetwork::clamp_log_std(double lo, double hi) {
  log_std_ = log_std_.cwiseMax(lo).cwiseMin(hi);
}

std::string PolicyNetwork::describe() const {
  std::ostringstream os;
  os << "obs_dim=" << obs_dim_ << " n_skills=" << n_skills_
     << " n_cont=" << n_cont_ << " hidden=";
  for (size_t i = 0; i < hidden_.size(); ++i) {
    os << (i ? "x" : "") << hidden_[i];
  }
  os << " params=" << param_count();
  return os.str();
}

}  // namespace keeper
