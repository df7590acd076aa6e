#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "keeper/policy.hpp"
#include "keeper/rng.hpp"
#include "oracles.hpp"

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using keeper::PolicyNetwork;
using keeper::Rng;

namespace {

VectorXd random_obs(int n, Rng& rng) {
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = rng.uniform(-1.0, 1.0);
  return x;
}

RowVectorXd softmax(const RowVectorXd& logits) {
  const RowVectorXd shifted =
      (logits.array() - logits.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

}  // namespace

TEST_CASE("parameter count matches the layer shapes") {
  Rng rng(1);
  PolicyNetwork net(5, 3, 2, {8, 4}, 0.0, -0.5, rng);
  // trunk 84, categorical head 15, mean head 10, log-std 2, critic 89.
  CHECK(net.param_count() == 200);
  CHECK(net.flatten_params().size() == 200);
  CHECK(net.flatten_grads().size() == 200);
}

TEST_CASE("flatten and set round-trip") {
  Rng rng(2);
  PolicyNetwork net(6, 4, 3, {10, 6}, 1.0, -0.5, rng);
  const VectorXd p = net.flatten_params();
  VectorXd q = p;
  for (int i = 0; i < q.size(); ++i) q(i) += 1e-3 * (i % 7 - 3);
  net.set_params(q);
  CHECK((net.flatten_params() - q).norm() == 0.0);
  net.set_params(p);
  CHECK((net.flatten_params() - p).norm() == 0.0);
}

TEST_CASE("stand bias lands on the first logit") {
  Rng rng(3);
  PolicyNetwork net(8, 4, 12, {16}, 2.0, -0.5, rng);
  const VectorXd obs = random_obs(8, rng);
  const auto fwd = net.forward(obs.transpose(), false);
  // Heads start near zero, so the bias dominates the first logit.
  CHECK(std::abs(fwd.logits(0, 0) - 2.0) < 0.3);
  for (int k = 1; k < 4; ++k) CHECK(std::abs(fwd.logits(0, k)) < 0.3);
}

TEST_CASE("batched forward agrees with row-by-row forward") {
  Rng rng(4);
  PolicyNetwork net(7, 3, 4, {12, 8}, 0.5, -0.5, rng);
  MatrixXd obs(5, 7);
  for (int i = 0; i < 5; ++i) obs.row(i) = random_obs(7, rng).transpose();
  const auto batch = net.forward(obs, false);
  for (int i = 0; i < 5; ++i) {
    const auto row = net.forward(obs.row(i), false);
    CHECK((batch.logits.row(i) - row.logits.row(0)).norm() <= 1e-12);
    CHECK((batch.mu.row(i) - row.mu.row(0)).norm() <= 1e-12);
    CHECK(batch.value(i) == doctest::Approx(row.value(0)).epsilon(1e-12));
  }
}

TEST_CASE("forward rejects wrong observation width") {
  Rng rng(5);
  PolicyNetwork net(6, 3, 2, {8}, 0.0, -0.5, rng);
  MatrixXd bad(1, 5);
  bad.setZero();
  CHECK_THROWS_AS(net.forward(bad, false), std::domain_error);
}

TEST_CASE("sampling is deterministic and tanh-bounded") {
  Rng rng(6);
  PolicyNetwork net(10, 4, 12, {32}, 2.0, -0.5, rng);
  const VectorXd obs = random_obs(10, rng);
  Rng a(123), b(123);
  const auto sa = net.act(obs, a);
  const auto sb = net.act(obs, b);
  CHECK(sa.skill == sb.skill);
  CHECK((sa.pre_squash - sb.pre_squash).norm() == 0.0);
  CHECK((sa.action - sb.action).norm() == 0.0);
  CHECK(sa.log_prob == sb.log_prob);
  CHECK(sa.value == sb.value);
  for (int i = 0; i < sa.action.size(); ++i) {
    CHECK(std::abs(sa.action(i)) < 1.0);
    CHECK(sa.action(i) == doctest::Approx(std::tanh(sa.pre_squash(i))).epsilon(1e-15));
  }
  CHECK(std::isfinite(sa.log_prob));
}

TEST_CASE("stand bias skews sampled skills toward index zero") {
  Rng rng(7);
  PolicyNetwork net(6, 3, 2, {8}, 2.0, -0.5, rng);
  const VectorXd obs = random_obs(6, rng);
  Rng draws(77);
  int zero = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    if (net.act(obs, draws).skill == 0) ++zero;
  }
  // exp(2) / (exp(2) + 2) is about 0.79 when the other logits sit near zero.
  const double frac = static_cast<double>(zero) / n;
  CHECK(frac > 0.70);
  CHECK(frac < 0.88);
}

TEST_CASE("greedy action is the argmax skill and squashed mean") {
  Rng rng(8);
  PolicyNetwork net(6, 4, 3, {8}, 2.0, -0.5, rng);
  const VectorXd obs = random_obs(6, rng);
  const auto fwd = net.forward(obs.transpose(), false);
  const auto s = net.act_greedy(obs);
  int best = 0;
  for (int k = 1; k < 4; ++k) {
    if (fwd.logits(0, k) > fwd.logits(0, best)) best = k;
  }
  CHECK(s.skill == best);
  for (int i = 0; i < 3; ++i) {
    CHECK(s.action(i) == doctest::Approx(std::tanh(fwd.mu(0, i))).epsilon(1e-14));
  }
}

TEST_CASE("joint density normalizes to one") {
  Rng rng(9);
  PolicyNetwork net(2, 3, 1, {6}, 0.7, -0.3, rng);
  const VectorXd obs = random_obs(2, rng);
  const auto fwd = net.forward(obs.transpose(), false);
  const RowVectorXd logits = fwd.logits.row(0);
  const RowVectorXd mu = fwd.mu.row(0);
  const double sigma = std::exp(net.log_std()(0));

  // The log-probability is a density over (skill, squashed action). Change
  // of variables back to the pre-squash value multiplies by 1 - tanh(v)^2,
  // so integrating that product over v and summing skills must give 1.
  double total = 0.0;
  for (int k = 0; k < 3; ++k) {
    auto integrand = [&](double v) {
      VectorXd vv(1);
      vv << v;
      const double lp = net.log_prob(logits, mu, k, vv);
      const double t = std::tanh(v);
      return std::exp(lp) * (1.0 - t * t);
    };
    total += oracle::simpson(integrand, mu(0) - 10 * sigma, mu(0) + 10 * sigma,
                             4000);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("log-probability splits into categorical and gaussian parts") {
  Rng rng(10);
  PolicyNetwork net(3, 4, 2, {6}, 0.0, -0.5, rng);
  const VectorXd obs = random_obs(3, rng);
  const auto fwd = net.forward(obs.transpose(), false);
  const RowVectorXd logits = fwd.logits.row(0);
  const RowVectorXd mu = fwd.mu.row(0);
  VectorXd v(2);
  v << 0.3, -0.8;
  const RowVectorXd p = softmax(logits);
  // Same continuous draw, different skills: the difference is the log of the
  // categorical ratio.
  const double d01 = net.log_prob(logits, mu, 0, v) - net.log_prob(logits, mu, 1, v);
  CHECK(d01 == doctest::Approx(std::log(p(0) / p(1))).epsilon(1e-12));
}

TEST_CASE("entropies match closed forms") {
  Rng rng(11);
  PolicyNetwork net(3, 4, 5, {6}, 0.0, -0.25, rng);
  RowVectorXd uniform_logits = RowVectorXd::Constant(4, 1.7);
  CHECK(net.categorical_entropy(uniform_logits) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  RowVectorXd peaked(4);
  peaked << 60.0, 0.0, 0.0, 0.0;
  CHECK(net.categorical_entropy(peaked) >= 0.0);
  CHECK(net.categorical_entropy(peaked) < 1e-20);
  // Diagonal Gaussian entropy: sum(log sigma) + n/2 (log 2 pi + 1).
  const double expect = 5 * (-0.25) + 0.5 * 5 * (std::log(2 * M_PI) + 1.0);
  CHECK(net.gaussian_entropy() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("head and trunk gradients agree with finite differences") {
  Rng rng(12);
  PolicyNetwork net(4, 3, 2, {6, 5}, 0.4, -0.4, rng);
  const VectorXd obs = random_obs(4, rng);
  const int skill = 1;
  VectorXd v(2);
  v << 0.25, -0.6;

  // Loss: joint log-probability of a fixed pair plus twice the value.
  auto loss = [&]() {
    const auto f = net.forward(obs.transpose(), false);
    return net.log_prob(f.logits.row(0), f.mu.row(0), skill, v) +
           2.0 * f.value(0);
  };

  const auto fwd = net.forward(obs.transpose(), true);
  const RowVectorXd p = softmax(fwd.logits.row(0));
  RowVectorXd dlogits = -p;
  dlogits(skill) += 1.0;
  const VectorXd sigma = net.log_std().array().exp().matrix();
  RowVectorXd dmu(2);
  VectorXd dlog_std(2);
  for (int i = 0; i < 2; ++i) {
    const double z = (v(i) - fwd.mu(0, i)) / sigma(i);
    dmu(i) = z / sigma(i);
    dlog_std(i) = z * z - 1.0;
  }
  VectorXd dvalue(1);
  dvalue << 2.0;

  net.zero_grads();
  net.backward(fwd, dlogits, dmu, dvalue);
  net.grad_log_std() += dlog_std;
  const VectorXd analytic = net.flatten_grads();

  const VectorXd theta = net.flatten_params();
  const double h = 1e-6;
  for (int i = 0; i < theta.size(); ++i) {
    VectorXd tp = theta;
    tp(i) = theta(i) + h;
    net.set_params(tp);
    const double up = loss();
    tp(i) = theta(i) - h;
    net.set_params(tp);
    const double dn = loss();
    const double fd = (up - dn) / (2 * h);
    CHECK(analytic(i) == doctest::Approx(fd).epsilon(2e-5).scale(1.0));
  }
  net.set_params(theta);
}

TEST_CASE("squash correction is stable far into the tails") {
  // 1 - tanh(x)^2 = sech(x)^2, so -2 log cosh is an exact independent route
  // that stays accurate where the naive difference cancels catastrophically.
  for (double x : {0.0, 0.5, -1.25, 3.0, -7.5, 14.0, 40.0, 300.0}) {
    const double via_cosh = -2.0 * std::log(std::cosh(x));
    CHECK(keeper::log_one_minus_tanh_sq(x) ==
          doctest::Approx(via_cosh).epsilon(1e-13));
  }
  for (double x : {0.1, -0.9, 2.0}) {
    const double naive = std::log(1.0 - std::tanh(x) * std::tanh(x));
    CHECK(keeper::log_one_minus_tanh_sq(x) ==
          doctest::Approx(naive).epsilon(1e-12));
  }
  CHECK(std::isfinite(keeper::log_one_minus_tanh_sq(300.0)));
  CHECK(keeper::log_one_minus_tanh_sq(300.0) < -500.0);
}

TEST_CASE("log std clamp applies elementwise") {
  Rng rng(13);
  PolicyNetwork low(3, 3, 4, {5}, 0.0, -9.0, rng);
  low.clamp_log_std(-4.0, 1.0);
  CHECK(low.log_std().minCoeff() >= -4.0);
  PolicyNetwork high(3, 3, 4, {5}, 0.0, 3.0, rng);
  high.clamp_log_std(-4.0, 1.0);
  CHECK(high.log_std().maxCoeff() <= 1.0);
  CHECK(high.log_std().minCoeff() >= -4.0);
}

TEST_CASE("identically seeded networks are identical") {
  Rng a(42), b(42);
  PolicyNetwork na(12, 4, 12, {32, 16}, 2.0, -0.5, a);
  PolicyNetwork nb(12, 4, 12, {32, 16}, 2.0, -0.5, b);
  CHECK((na.flatten_params() - nb.flatten_params()).norm() == 0.0);
}
