#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace msbm {

// Simulated states at a list of recording times. Times are ascending for
// forward runs and descending for backward runs; every slice shares the same
// batch of path rows.
struct TrajectoryBatch {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> states;  // one (batch x d) matrix per time

  int num_times() const { return static_cast<int>(times.size()); }
  int batch() const { return states.empty() ? 0 : static_cast<int>(states.front().rows()); }
  int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().cols()); }

  // index of the slice recorded at time t (exact match); -1 if absent
  int index_of_time(double t) const;
  const Eigen::MatrixXd& at_time(double t) const;
};

// Columns: path_id, t, x0..x{d-1}. Leading '#' lines carry provenance.
void write_trajectory_csv(const std::filesystem::path& file, const TrajectoryBatch& traj,
                          const std::vector<std::string>& comment_lines = {});

}  // namespace msbm
