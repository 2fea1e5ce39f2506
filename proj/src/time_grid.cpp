#include "msbm/time_grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace msbm {

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) {
    throw std::invalid_argument("TimeGrid needs at least two timestamps");
  }
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!std::isfinite(times_[i])) {
      throw std::invalid_argument("TimeGrid: non-finite timestamp");
    }
    if (i > 0 && !(times_[i - 1] < times_[i])) {
      throw std::invalid_argument("TimeGrid: timestamps must be strictly increasing");
    }
  }
}

double TimeGrid::next_time(double t) const {
  if (!(t >= front() && t < back())) {
    throw std::domain_error("next_time: t outside [t_0, t_k)");
  }
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  return *it;
}

double TimeGrid::prev_time(double t) const {
  if (!(t > front() && t <= back())) {
    throw std::domain_error("prev_time: t outside (t_0, t_k]");
  }
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  return *(it - 1);
}

int TimeGrid::interval_index(double t, Direction dir) const {
  if (dir == Direction::forward) {
    if (!(t >= front() && t < back())) {
      throw std::domain_error("interval_index(forward): t outside [t_0, t_k)");
    }
    // i with t in [t_{i-1}, t_i)
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return static_cast<int>(it - times_.begin());
  }
  if (!(t > front() && t <= back())) {
    throw std::domain_error("interval_index(backward): t outside (t_0, t_k]");
  }
  // i with t in (t_{i-1}, t_i]
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  return static_cast<int>(it - times_.begin());
}

MarginalDataset::MarginalDataset(TimeGrid grid, std::vector<Eigen::MatrixXd> samples)
    : grid_(std::move(grid)) {
  if (static_cast<int>(samples.size()) != grid_.num_times()) {
    throw std::invalid_argument("MarginalDataset: need exactly one snapshot per grid time");
  }
  dim_ = static_cast<int>(samples.front().cols());
  snapshots_.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Eigen::MatrixXd& m = samples[i];
    if (m.rows() < 1) {
      throw std::invalid_argument("MarginalDataset: empty snapshot at index " + std::to_string(i));
    }
    if (static_cast<int>(m.cols()) != dim_) {
      throw std::invalid_argument("MarginalDataset: snapshot dimension mismatch at index " +
                                  std::to_string(i));
    }
    if (!m.allFinite()) {
      throw std::invalid_argument("MarginalDataset: non-finite sample in snapshot " +
                                  std::to_string(i));
    }
    snapshots_.push_back(Snapshot{static_cast<int>(i), std::move(samples[i])});
  }
  holdout_.assign(snapshots_.size(), false);
}

void MarginalDataset::set_holdout(int time_index, bool held_out) {
  if (time_index <= 0 || time_index >= grid_.num_times() - 1) {
    throw std::invalid_argument("set_holdout: only interior times can be held out");
  }
  holdout_.at(static_cast<std::size_t>(time_index)) = held_out;
}

std::vector<int> MarginalDataset::held_out_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < holdout_.size(); ++i) {
    if (holdout_[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

bool MarginalDataset::has_holdout() const {
  return std::any_of(holdout_.begin(), holdout_.end(), [](bool b) { return b; });
}

MarginalDataset MarginalDataset::training_view() const {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> samples;
  for (int i = 0; i < num_snapshots(); ++i) {
    if (!holdout_[static_cast<std::size_t>(i)]) {
      times.push_back(grid_.time(i));
      samples.push_back(snapshots_[static_cast<std::size_t>(i)].samples);
    }
  }
  return MarginalDataset(TimeGrid(times), std::move(samples));
}

bool MarginalDataset::operator==(const MarginalDataset& other) const {
  if (!(grid_ == other.grid_) || holdout_ != other.holdout_) return false;
  for (int i = 0; i < num_snapshots(); ++i) {
    if (samples_at(i).rows() != other.samples_at(i).rows()) return false;
    if (samples_at(i) != other.samples_at(i)) return false;
  }
  return true;
}

}  // namespace msbm
