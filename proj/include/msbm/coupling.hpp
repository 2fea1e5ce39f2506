#pragma once

#include <vector>

#include <Eigen/Dense>

namespace msbm {

// Paired endpoint samples for one sub-interval [t_{i-1}, t_i]; row j of
// `left` is coupled with row j of `right`.
struct IntervalCoupling {
  int interval = 1;  // 1-based, matches TimeGrid::interval_index
  Eigen::MatrixXd left;   // m x d samples at t_{i-1}
  Eigen::MatrixXd right;  // m x d samples at t_i

  int rows() const { return static_cast<int>(left.rows()); }
  int dim() const { return static_cast<int>(left.cols()); }
  void validate() const;
};

void validate_chain(const std::vector<IntervalCoupling>& couplings, int num_intervals);

}  // namespace msbm
