#include "keeper/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace keeper {

double elu(double x) { return x > 0.0 ? x : std::exp(x) - 1.0; }
double elu_derivative(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

LinearLayer::LinearLayer(int out, int in)
    : w(MatrixXd::Zero(out, in)),
      b(VectorXd::Zero(out)),
      grad_w(MatrixXd::Zero(out, in)),
      grad_b(VectorXd::Zero(out)) {}

MatrixXd LinearLayer::forward(const MatrixXd& x) const {
  if (x.cols() != w.cols()) {
    throw std::domain_error("LinearLayer: input dimension mismatch");
  }
  return (x * w.transpose()).rowwise() + b.transpose();
}

MatrixXd LinearLayer::backward(const MatrixXd& x, const MatrixXd& grad_out) {
  grad_w.noalias() += grad_out.transpose() * x;
  grad_b.noalias() += grad_out.colwise().sum().transpose();
  return grad_out * w;
}

void LinearLayer::zero_grads() {
  grad_w.setZero();
  grad_b.setZero();
}

void init_layer(LinearLayer& layer, Rng& rng, double scale) {
  const double bound = scale * std::sqrt(6.0 / layer.in_dim());
  for (int r = 0; r < layer.w.rows(); ++r) {
    for (int c = 0; c < layer.w.cols(); ++c) {
      layer.w(r, c) = rng.uniform(-bound, bound);
    }
  }
  layer.b.setZero();
}

Mlp::Mlp(const std::vector<int>& dims, bool activate_last, Rng& rng)
    : activate_last_(activate_last) {
  if (dims.size() < 2) {
    throw std::invalid_argument("Mlp: need at least input and output dims");
  }
  layers_.reserve(dims.size() - 1);
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    layers_.emplace_back(dims[i + 1], dims[i]);
    init_layer(layers_.back(), rng);
  }
}

MatrixXd Mlp::forward(const MatrixXd& x, Cache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  MatrixXd h = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (cache) cache->inputs.push_back(h);
    MatrixXd pre = layers_[i].forward(h);
    if (cache) cache->pre.push_back(pre);
    const bool activate = (i + 1 < layers_.size()) || activate_last_;
    h = activate ? pre.unaryExpr([](double v) { return elu(v); }) : std::move(pre);
  }
  return h;
}

MatrixXd Mlp::backward(const Cache& cache, const MatrixXd& grad_out) {
  if (cache.inputs.size() != layers_.size()) {
    throw std::logic_error("Mlp::backward: cache does not match network");
  }
  MatrixXd g = grad_out;
  for (size_t idx = layers_.size(); idx-- > 0;) {
    const bool activate = (idx + 1 < layers_.size()) || activate_last_;
    if (activate) {
      g = g.cwiseProduct(
          cache.pre[idx].unaryExpr([](double v) { return elu_derivative(v); }));
    }
    g = layers_[idx].backward(cache.inputs[idx], g);
  }
  return g;
}

void Mlp::zero_grads() {
  for (auto& l : layers_) l.zero_grads();
}

Adam::Adam(int n, double beta1, double beta2, double eps)
    : m_(VectorXd::Zero(n)),
      v_(VectorXd::Zero(n)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void Adam::step(VectorXd& params, const VectorXd& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::domain_error("Adam: size mismatch");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grads;
  v_ = beta2_ * v_.array().matrix() +
       (1.0 - beta2_) * grads.array().square().matrix();
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  params.array() -=
      lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + eps_);
}

void Adam::restore(const VectorXd& m, const VectorXd& v, int t) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw std::domain_error("Adam::restore: size mismatch");
  }
  m_ = m;
  v_ = v;
  t_ = t;
}

double clip_grad_norm(VectorXd& grads, double max_norm) {
  const double norm = grads.norm();
  if (norm > max_norm && norm > 0.0) {
    grads *= max_norm / norm;
  }
  return norm;
}

}  // namespace keeper
