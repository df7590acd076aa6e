#include "keeper/estimation.hpp"

#include <algorithm>
#include <stdexcept>

namespace keeper {

namespace {

Eigen::Matrix<double, 6, 6> transition(double dt) {
  Mat6 f = Mat6::Identity();
  f.topRightCorner<3, 3>() = dt * Eigen::Matrix3d::Identity();
  return f;
}

const Vec3 kGravityVec{0.0, 0.0, -kGravity};

}  // namespace

Mat6 process_noise(const FilterParams& p, double dt) {
  (void)dt;  // constant per update by design; kept in the signature so a
             // rate-scaled variant stays a local change
  Mat6 q = Mat6::Zero();
  q.bottomRightCorner<3, 3>() =
      p.process_vel_std2 * Eigen::Matrix3d::Identity();
  return q;
}

BallBelief kf_predict(const BallBelief& b, double dt, const Mat6& q) {
  BallBelief n;
  n.mean.head<3>() = b.position() + dt * b.velocity() +
                     0.5 * dt * dt * kGravityVec;
  n.mean.tail<3>() = b.velocity() + dt * kGravityVec;
  const Mat6 f = transition(dt);
  n.covariance = f * b.covariance * f.transpose() + q;
  n.time = b.time + dt;
  return n;
}

BallBelief kf_update(const BallBelief& b, const Vec3& measurement,
                     const Eigen::Matrix3d& r) {
  using Mat36 = Eigen::Matrix<double, 3, 6>;
  Mat36 h = Mat36::Zero();
  h.leftCols<3>() = Eigen::Matrix3d::Identity();

  const Eigen::Matrix3d s = h * b.covariance * h.transpose() + r;
  Eigen::LLT<Eigen::Matrix3d> llt(s);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("kf_update: innovation covariance not PD");
  }
  const Eigen::Matrix<double, 6, 3> k =
      llt.solve(h * b.covariance).transpose();

  BallBelief n;
  n.time = b.time;
  n.mean = b.mean + k * (measurement - b.position());
  const Mat6 ikh = Mat6::Identity() - k * h;
  n.covariance = ikh * b.covariance * ikh.transpose() + k * r * k.transpose();
  n.covariance = 0.5 * (n.covariance + n.covariance.transpose()).eval();
  return n;
}

BallBelief init_two_point(const BallObservation& first,
                          const BallObservation& second,
                          double measurement_std) {
  const double dt = second.timestamp - first.timestamp;
  if (!(dt > 0.0)) {
    throw std::domain_error("init_two_point: measurements must advance time");
  }
  BallBelief b;
  b.time = second.timestamp;
  b.mean.head<3>() = second.position;
  // Differencing positions under gravity reads v(t1) + g dt / 2; shift to the
  // second timestamp: v(t2) = diff + g dt / 2.
  b.mean.tail<3>() =
      (second.position - first.position) / dt + 0.5 * dt * kGravityVec;

  const double s2 = measurement_std * measurement_std;
  Mat6 p = Mat6::Zero();
  p.topLeftCorner<3, 3>() = s2 * Eigen::Matrix3d::Identity();
  p.bottomRightCorner<3, 3>() =
      2.0 * s2 / (dt * dt) * Eigen::Matrix3d::Identity();
  // Both blocks share the second measurement's noise.
  p.topRightCorner<3, 3>() = s2 / dt * Eigen::Matrix3d::Identity();
  p.bottomLeftCorner<3, 3>() = s2 / dt * Eigen::Matrix3d::Identity();
  b.covariance = p;
  return b;
}

std::optional<Interception> predict_interception(const BallBelief& b,
                                                 double horizon,
                                                 double plane_x) {
  const double vx = b.velocity().x();
  if (vx == 0.0) return std::nullopt;
  const double t = (plane_x - b.position().x()) / vx;
  if (t <= 0.0 || t > horizon) return std::nullopt;
  Interception hit;
  hit.time_to_arrival = t;
  hit.point = b.position() + t * b.velocity() + 0.5 * t * t * kGravityVec;
  return hit;
}

void BallTracker::observe(const BallObservation& obs) {
  const double r_std = std::max(params_.measurement_std, 1e-3);
  const Eigen::Matrix3d r = r_std * r_std * Eigen::Matrix3d::Identity();

  if (belief_ && previous_) {
    const double dt = obs.timestamp - belief_->time;
    BallBelief pred =
        dt > 0.0 ? kf_predict(*belief_, dt, process_noise(params_, dt))
                 : *belief_;
    const Vec3 innovation = obs.position - pred.position();
    const Eigen::Matrix3d s =
        pred.covariance.topLeftCorner<3, 3>() + r;
    const double nis = innovation.dot(s.llt().solve(innovation));
    if (nis > nis_reset_) {
      // Track no longer explains the data (e.g. launch after a standstill):
      // restart from the last two raw measurements.
      belief_ = init_two_point(*previous_, obs, r_std);
    } else {
      belief_ = kf_update(pred, obs.position, r);
    }
  } else if (previous_) {
    belief_ = init_two_point(*previous_, obs, r_std);
  }
  previous_ = obs;
}

}  // namespace keeper
