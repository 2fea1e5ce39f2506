#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace msbm {

enum class Direction { forward, backward };

// The discrete time structure: strictly increasing timestamps t_0 < ... < t_k.
// Interval i (1-based, i = 1..k) spans [t_{i-1}, t_i). Grid points belong to
// the right interval in the forward convention and to the left interval in
// the backward convention, so boundary membership is never ambiguous.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> times);

  int num_times() const { return static_cast<int>(times_.size()); }
  int num_intervals() const { return num_times() - 1; }
  double time(int i) const { return times_.at(static_cast<std::size_t>(i)); }
  double front() const { return times_.front(); }
  double back() const { return times_.back(); }
  double span() const { return back() - front(); }
  const std::vector<double>& times() const { return times_; }

  // smallest grid time strictly greater than t; valid for t_0 <= t < t_k
  double next_time(double t) const;
  // largest grid time strictly less than t; valid for t_0 < t <= t_k
  double prev_time(double t) const;

  // 1-based index i with t in [t_{i-1}, t_i) (forward) or (t_{i-1}, t_i]
  // (backward).
  int interval_index(double t, Direction dir) const;

  double interval_left(int i) const { return time(i - 1); }
  double interval_right(int i) const { return time(i); }
  double interval_length(int i) const { return time(i) - time(i - 1); }

  bool operator==(const TimeGrid& other) const { return times_ == other.times_; }

 private:
  std::vector<double> times_;
};

// One empirical sample set, rows are samples.
struct Snapshot {
  int time_index = 0;
  Eigen::MatrixXd samples;  // n_i x d
};

// Ordered snapshots over a grid plus an optional holdout mask for
// leave-one-out evaluation. Held-out times are dropped from the training
// view but kept here for evaluation.
class MarginalDataset {
 public:
  MarginalDataset(TimeGrid grid, std::vector<Eigen::MatrixXd> samples);

  const TimeGrid& grid() const { return grid_; }
  int dim() const { return dim_; }
  int num_snapshots() const { return static_cast<int>(snapshots_.size()); }
  const Snapshot& snapshot(int i) const { return snapshots_.at(static_cast<std::size_t>(i)); }
  const Eigen::MatrixXd& samples_at(int i) const { return snapshot(i).samples; }

  // Holdout is restricted to interior times; the global endpoints anchor the
  // dynamics and cannot be masked.
  void set_holdout(int time_index, bool held_out);
  bool is_held_out(int time_index) const { return holdout_.at(static_cast<std::size_t>(time_index)); }
  std::vector<int> held_out_indices() const;
  bool has_holdout() const;

  // Dataset restricted to the non-held-out times.
  MarginalDataset training_view() const;

  bool operator==(const MarginalDataset& other) const;

 private:
  TimeGrid grid_;
  std::vector<Snapshot> snapshots_;
  std::vector<bool> holdout_;
  int dim_ = 0;
};

}  // namespace msbm
