#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "msbm/control_net.hpp"
#include "msbm/reference_bridge.hpp"
#include "msbm/time_grid.hpp"
#include "msbm/trajectory.hpp"

namespace msbm {

struct SimConfig {
  int steps_per_interval = 30;
  std::uint64_t seed = 0;
  std::vector<double> record_times;  // extra recording times; endpoints always recorded

  void validate() const;
};

// Batched vector field (t, states) -> drift-control values, one row per state
// row. ControlFunction plugs in via control_field(); tests may pass closures.
using ControlField = std::function<Eigen::MatrixXd(double, const Eigen::MatrixXd&)>;

ControlField zero_control();
// View over ctrl; the control must outlive the returned field.
ControlField control_field(const ControlFunction& ctrl);

// Euler-Maruyama for dX = [f_t(X) + sigma v(t, X)] dt + sigma dW over
// [t_start, t_end]. Uniform steps, refined to hit cfg.record_times exactly;
// every step time is recorded when cfg.record_times is empty.
TrajectoryBatch simulate_forward(const ControlField& v, const Eigen::MatrixXd& x0, double t_start,
                                 double t_end, const SimConfig& cfg, const ReferenceProcess& ref);

// Backward-time companion on the original clock: stepping from t down to
// t - dt applies x += [sigma u(t, x) - f_t(x)] dt + sigma sqrt(dt) z.
// Requires t_start > t_end; recorded times are descending.
TrajectoryBatch simulate_backward(const ControlField& u, const Eigen::MatrixXd& xT, double t_start,
                                  double t_end, const SimConfig& cfg, const ReferenceProcess& ref);

// One continuous rollout across all grid intervals from the first snapshot
// (forward) or the last (backward); states at grid times plus requested
// record times. Interval i draws noise from the sub-stream
// stream_key(cfg.seed, 101, i), so a per-interval simulation with that seed
// reproduces the corresponding rollout chunk exactly.
TrajectoryBatch rollout_full(const ControlField& ctrl, const MarginalDataset& dataset,
                             Direction direction, const SimConfig& cfg,
                             const ReferenceProcess& ref);

TrajectoryBatch rollout_from(const ControlField& ctrl, const Eigen::MatrixXd& start,
                             const TimeGrid& grid, Direction direction, const SimConfig& cfg,
                             const ReferenceProcess& ref);

}  // namespace msbm
