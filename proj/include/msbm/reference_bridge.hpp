#pragma once

#include <vector>

#include <Eigen/Dense>

#include "msbm/coupling.hpp"
#include "msbm/rng.hpp"
#include "msbm/time_grid.hpp"
#include "msbm/trajectory.hpp"

namespace msbm {

enum class DriftKind { zero, affine };

// The reference diffusion dX = f_t(X) dt + sigma dW. Closed-form bridge
// sampling and the regression targets below require f = 0; the affine hook
// f_t(x) = a x + b exists for simulation only and is rejected by the
// closed-form operations.
class ReferenceProcess {
 public:
  static ReferenceProcess brownian(double sigma);
  static ReferenceProcess affine(double sigma, double a, double b);

  double sigma() const { return sigma_; }
  DriftKind drift_kind() const { return kind_; }
  bool has_closed_form_bridge() const { return kind_ == DriftKind::zero; }

  Eigen::VectorXd drift(double t, const Eigen::VectorXd& x) const;
  // rows of X are states; result has the same shape
  Eigen::MatrixXd drift_batch(double t, const Eigen::MatrixXd& X) const;

 private:
  ReferenceProcess(double sigma, DriftKind kind, double a, double b);
  double sigma_;
  DriftKind kind_;
  double a_ = 0.0, b_ = 0.0;
};

// A point query of the bridge pinned at (t_left, x_left) and (t_right, x_right),
// evaluated at a strictly interior time t.
struct BridgeQuery {
  double t_left = 0.0;
  double t_right = 1.0;
  Eigen::VectorXd x_left;
  Eigen::VectorXd x_right;
  double t = 0.5;

  void validate() const;
};

struct BridgeMoments {
  Eigen::VectorXd mean;
  double var = 0.0;  // isotropic
};

// Conditional Gaussian of the pinned Brownian bridge:
//   mean = (1-s) x_left + s x_right,  s = (t - t_left)/(t_right - t_left)
//   var  = sigma^2 (t - t_left)(t_right - t)/(t_right - t_left)
BridgeMoments bridge_mean_var(const BridgeQuery& q, const ReferenceProcess& ref);

Eigen::VectorXd sample_bridge(const BridgeQuery& q, const ReferenceProcess& ref, Rng& rng);

// Batched bridge sampling: rows of x_left/x_right are paired endpoints, ts[j]
// is the query time of row j (each strictly inside [t_left, t_right]).
Eigen::MatrixXd sample_bridge_batch(const Eigen::VectorXd& ts, double t_left, double t_right,
                                    const Eigen::MatrixXd& x_left, const Eigen::MatrixXd& x_right,
                                    const ReferenceProcess& ref, Rng& rng);

// Regression target sigma * grad_x log Q_{t_next|t}(x_next | x); for the
// Brownian reference this is (x_next - x) / (sigma (t_next - t)).
Eigen::VectorXd forward_score_target(const Eigen::VectorXd& x_t, const Eigen::VectorXd& x_next,
                                     double t, double t_next, const ReferenceProcess& ref);

// sigma * grad_y log Q_{t|t_prev}(y | x_prev) = (x_prev - y) / (sigma (t - t_prev))
Eigen::VectorXd backward_score_target(const Eigen::VectorXd& x_t, const Eigen::VectorXd& x_prev,
                                      double t, double t_prev, const ReferenceProcess& ref);

// Samples the mixture-of-bridges path at the query times. Each query time is
// served by the bridge of its containing interval using that interval's
// coupling; times equal to grid points return the coupling endpoints
// unchanged. All couplings must share one row count, which becomes the batch.
TrajectoryBatch sample_reciprocal_path(const std::vector<IntervalCoupling>& couplings,
                                       const TimeGrid& grid, std::vector<double> query_times,
                                       const ReferenceProcess& ref, Rng& rng);

}  // namespace msbm
