#pragma once

#include <string>
#include <vector>

#include "keeper/mlp.hpp"

namespace keeper {

// Actor-critic for the hybrid action space: a categorical skill head and a
// tanh-squashed diagonal-Gaussian head for the curve coefficients, on a
// shared activated trunk; the critic is a separate network of the same
// shape. All parameters flatten to one vector in a fixed order so the
// optimizer and finite-difference checks stay simple.
class PolicyNetwork {
 public:
  PolicyNetwork() = default;
  PolicyNetwork(int obs_dim, int n_skills, int n_cont,
                const std::vector<int>& hidden, double stand_bias,
                double log_std_init, Rng& rng);

  struct Forward {
    MatrixXd logits;   // batch x n_skills
    MatrixXd mu;       // batch x n_cont, pre-squash mean
    VectorXd value;    // batch
    MatrixXd features; // batch x hidden.back(), activated trunk output
    Mlp::Cache trunk_cache;
    Mlp::Cache critic_cache;
  };

  // with_cache=false skips activation caching (rollout / eval path).
  Forward forward(const MatrixXd& obs, bool with_cache) const;

  // Backpropagates head gradients through trunk and critic, accumulating
  // parameter gradients. fwd must come from forward(obs, true) on the same
  // observations.
  void backward(const Forward& fwd, const MatrixXd& dlogits,
                const MatrixXd& dmu, const VectorXd& dvalue);

  struct Sample {
    int skill = 0;
    VectorXd pre_squash;  // Gaussian draw before tanh
    VectorXd action;      // tanh(pre_squash), in (-1,1)
    double log_prob = 0.0;
    double value = 0.0;
  };

  // Draws from the current distribution at one observation.
  Sample act(const VectorXd& obs, Rng& rng) const;
  // Deterministic mode: argmax skill, tanh(mu) continuous.
  Sample act_greedy(const VectorXd& obs) const;

  // Joint log-probability of (skill, pre_squash) under the given head
  // outputs; includes the tanh change-of-variable correction.
  double log_prob(const Eigen::RowVectorXd& logits,
                  const Eigen::RowVectorXd& mu, int skill,
                  const VectorXd& pre_squash) const;

  double categorical_entropy(const Eigen::RowVectorXd& logits) const;
  double gaussian_entropy() const;  // pre-squash differential entropy

  // Flat parameter plumbing (order: trunk, cat head, mu head, log_std,
  // critic; each layer w row-major then b).
  int param_count() const;
  VectorXd flatten_params() const;
  VectorXd flatten_grads() const;
  void set_params(const VectorXd& flat);
  void zero_grads();
  void clamp_log_std(double lo, double hi);

  int obs_dim() const { return obs_dim_; }
  int n_skills() const { return n_skills_; }
  int n_cont() const { return n_cont_; }
  const std::vector<int>& hidden() const { return hidden_; }
  const VectorXd& log_std() const { return log_std_; }
  VectorXd& grad_log_std() { return grad_log_std_; }

  // Self-describing parameter snapshot (shapes + flat values), as a JSON
  // string fragment handled by the checkpoint writer.
  std::string describe() const;

 private:
  int obs_dim_ = 0;
  int n_skills_ = 0;
  int n_cont_ = 0;
  std::vector<int> hidden_;
  Mlp trunk_;
  LinearLayer cat_head_;
  LinearLayer mu_head_;
  VectorXd log_std_;
  VectorXd grad_log_std_;
  Mlp critic_;
};

// Numerically stable log(1 - tanh(v)^2).
double log_one_minus_tanh_sq(double v);
double log_sum_exp(const Eigen::RowVectorXd& v);

}  // namespace keeper
