#pragma once

#include <Eigen/Dense>
#include <optional>

#include "keeper/ball.hpp"

namespace keeper {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Gaussian belief over [position; velocity], stamped with the time the mean
// refers to.
struct BallBelief {
  Vec6 mean = Vec6::Zero();
  Mat6 covariance = Mat6::Identity();
  double time = 0.0;

  Vec3 position() const { return mean.head<3>(); }
  Vec3 velocity() const { return mean.tail<3>(); }
};

struct FilterParams {
  double measurement_std = 0.05;      // R = std^2 * I3
  double process_vel_std2 = 1e-4;     // Q: velocity diagonal (position 0)
};

Mat6 process_noise(const FilterParams& p, double dt);

// Exact constant-gravity propagation: mean moves along the ballistic arc,
// covariance through the linear transition plus Q.
BallBelief kf_predict(const BallBelief& b, double dt, const Mat6& q);

// Position-only measurement update, Joseph form (keeps the covariance
// symmetric PSD). Throws std::runtime_error when the innovation covariance
// is not positive definite.
BallBelief kf_update(const BallBelief& b, const Vec3& measurement,
                     const Eigen::Matrix3d& r);

// Two-point differencing init from consecutive measurements. The velocity is
// debiased for gravity over the gap, and the covariance carries the
// position-velocity cross term sigma^2/dt of the differencing noise.
BallBelief init_two_point(const BallObservation& first,
                          const BallObservation& second,
                          double measurement_std);

struct Interception {
  Vec3 point = Vec3::Zero();
  double time_to_arrival = 0.0;
};

// Ballistic roll-forward of the mean to its crossing of the plane
// x = plane_x, within (0, horizon]. No ground interaction is assumed; a
// belief moving away from or parallel to the plane yields nullopt.
std::optional<Interception> predict_interception(const BallBelief& b,
                                                 double horizon,
                                                 double plane_x);

// Sequential filter for one episode: two-point initialization, then
// predict+update per measurement. Innovations that are wildly inconsistent
// with the track (normalized squared innovation above nis_reset) drop the
// track and re-initialize from the last two measurements; the launch
// transient after a standstill is unmodelled, so without this the filter
// would trust its near-zero velocity for the rest of the flight.
class BallTracker {
 public:
  BallTracker(const FilterParams& params, double nis_reset = 12.0)
      : params_(params), nis_reset_(nis_reset) {}

  void observe(const BallObservation& obs);
  bool initialized() const { return belief_.has_value(); }
  const BallBelief& belief() const { return *belief_; }

 private:
  FilterParams params_;
  double nis_reset_;
  std::optional<BallBelief> belief_;
  std::optional<BallObservation> previous_;
};

}  // namespace keeper
