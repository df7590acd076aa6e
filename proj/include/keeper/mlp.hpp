#pragma once

#include <Eigen/Core>
#include <vector>

#include "keeper/rng.hpp"

namespace keeper {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Exponential linear unit, applied elementwise. Smooth everywhere except the
// origin, where both one-sided derivatives are 1.
double elu(double x);
double elu_derivative(double x);

// One dense layer, y = x W^T + b, rows of x are samples. Gradients accumulate
// into grad_w / grad_b until zero_grads.
struct LinearLayer {
  MatrixXd w;       // out x in
  VectorXd b;       // out
  MatrixXd grad_w;
  VectorXd grad_b;

  LinearLayer() = default;
  LinearLayer(int out, int in);

  int in_dim() const { return static_cast<int>(w.cols()); }
  int out_dim() const { return static_cast<int>(w.rows()); }

  MatrixXd forward(const MatrixXd& x) const;
  // grad_out: dL/dy (batch x out). Returns dL/dx and accumulates parameter
  // gradients. `x` must be the input the forward pass saw.
  MatrixXd backward(const MatrixXd& x, const MatrixXd& grad_out);
  void zero_grads();
};

// Dense feedforward stack with ELU between layers. `activate_last` applies
// ELU after the final layer too (used for shared trunks whose consumers
// expect activated features).
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<int>& dims, bool activate_last, Rng& rng);

  // Cached activations from one forward pass; required for backward.
  struct Cache {
    std::vector<MatrixXd> inputs;  // input to each layer
    std::vector<MatrixXd> pre;     // pre-activation output of each layer
  };

  MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const;
  // Backpropagates dL/d(output) and returns dL/d(input); parameter gradients
  // accumulate in the layers.
  MatrixXd backward(const Cache& cache, const MatrixXd& grad_out);
  void zero_grads();

  std::vector<LinearLayer>& layers() { return layers_; }
  const std::vector<LinearLayer>& layers() const { return layers_; }
  int in_dim() const { return layers_.front().in_dim(); }
  int out_dim() const { return layers_.back().out_dim(); }

 private:
  std::vector<LinearLayer> layers_;
  bool activate_last_ = false;
};

// He-style uniform initialization, fan-in scaled; `scale` shrinks the range
// (small heads start near-deterministic policies).
void init_layer(LinearLayer& layer, Rng& rng, double scale = 1.0);

// First-order adaptive-moment optimizer over a flat parameter vector, with
// bias correction. Decoupled from the networks: callers flatten, step, and
// unflatten.
class Adam {
 public:
  Adam() = default;
  Adam(int n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(VectorXd& params, const VectorXd& grads, double lr);
  int iterations() const { return t_; }

  // Checkpoint access.
  const VectorXd& m() const { return m_; }
  const VectorXd& v() const { return v_; }
  void restore(const VectorXd& m, const VectorXd& v, int t);

 private:
  VectorXd m_;
  VectorXd v_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  int t_ = 0;
};

// Global L2 norm clip: rescales grads in place when their norm exceeds
// max_norm; returns the pre-clip norm.
double clip_grad_norm(VectorXd& grads, double max_norm);

}  // namespace keeper
