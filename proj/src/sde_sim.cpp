#include "msbm/sde_sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace msbm {

void SimConfig::validate() const {
  if (steps_per_interval < 1) {
    throw std::invalid_argument("SimConfig: steps_per_interval must be >= 1");
  }
}

ControlField zero_control() {
  return [](double, const Eigen::MatrixXd& X) { return Eigen::MatrixXd::Zero(X.rows(), X.cols()); };
}

ControlField control_field(const ControlFunction& ctrl) {
  return [&ctrl](double t, const Eigen::MatrixXd& X) {
    return ctrl.eval_batch(Eigen::VectorXd::Constant(X.rows(), t), X);
  };
}

namespace {

// Uniform partition of [a, b] into `steps` pieces, refined by the interior
// points of `extra`.
std::vector<double> step_times(double a, double b, int steps, const std::vector<double>& extra) {
  std::vector<double> ts;
  ts.reserve(static_cast<std::size_t>(steps) + extra.size() + 1);
  for (int m = 0; m <= steps; ++m) {
    ts.push_back(a + (b - a) * static_cast<double>(m) / steps);
  }
  ts.back() = b;
  for (double t : extra) {
    if (t > a && t < b) ts.push_back(t);
  }
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

void check_finite(const Eigen::MatrixXd& x, int step) {
  if (!x.allFinite()) {
    throw std::runtime_error("sde_sim: non-finite state at step " + std::to_string(step));
  }
}

TrajectoryBatch simulate_span(const ControlField& ctrl, const Eigen::MatrixXd& x_init,
                              double t_start, double t_end, const SimConfig& cfg,
                              const ReferenceProcess& ref, bool forward, Rng& rng,
                              bool record_all) {
  const double a = std::min(t_start, t_end);
  const double b = std::max(t_start, t_end);
  std::vector<double> ts = step_times(a, b, cfg.steps_per_interval, cfg.record_times);
  if (!forward) std::reverse(ts.begin(), ts.end());

  std::vector<bool> record(ts.size(), record_all);
  record.front() = record.back() = true;
  if (!record_all) {
    for (double t : cfg.record_times) {
      for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i] == t) record[i] = true;
      }
    }
  }

  const double sigma = ref.sigma();
  Eigen::MatrixXd x = x_init;
  TrajectoryBatch out;
  if (record.front()) {
    out.times.push_back(ts.front());
    out.states.push_back(x);
  }
  for (std::size_t m = 0; m + 1 < ts.size(); ++m) {
    const double t = ts[m];
    const double dt = std::abs(ts[m + 1] - ts[m]);
    Eigen::MatrixXd drift = sigma * ctrl(t, x);
    if (ref.drift_kind() != DriftKind::zero) {
      if (forward) {
        drift += ref.drift_batch(t, x);
      } else {
        drift -= ref.drift_batch(t, x);
      }
    }
    x += dt * drift + (sigma * std::sqrt(dt)) * rng.normal_matrix(static_cast<int>(x.rows()),
                                                                  static_cast<int>(x.cols()));
    check_finite(x, static_cast<int>(m) + 1);
    if (record[m + 1]) {
      out.times.push_back(ts[m + 1]);
      out.states.push_back(x);
    }
  }
  return out;
}

}  // namespace

TrajectoryBatch simulate_forward(const ControlField& v, const Eigen::MatrixXd& x0, double t_start,
                                 double t_end, const SimConfig& cfg, const ReferenceProcess& ref) {
  cfg.validate();
  if (!(t_start < t_end)) throw std::invalid_argument("simulate_forward: requires t_start < t_end");
  Rng rng = Rng::keyed(cfg.seed);
  return simulate_span(v, x0, t_start, t_end, cfg, ref, /*forward=*/true, rng,
                       /*record_all=*/cfg.record_times.empty());
}

TrajectoryBatch simulate_backward(const ControlField& u, const Eigen::MatrixXd& xT, double t_start,
                                  double t_end, const SimConfig& cfg, const ReferenceProcess& ref) {
  cfg.validate();
  if (!(t_start > t_end)) {
    throw std::invalid_argument("simulate_backward: requires t_start > t_end");
  }
  Rng rng = Rng::keyed(cfg.seed);
  return simulate_span(u, xT, t_start, t_end, cfg, ref, /*forward=*/false, rng,
                       /*record_all=*/cfg.record_times.empty());
}

TrajectoryBatch rollout_from(const ControlField& ctrl, const Eigen::MatrixXd& start,
                             const TimeGrid& grid, Direction direction, const SimConfig& cfg,
                             const ReferenceProcess& ref) {
  cfg.validate();
  const int k = grid.num_intervals();
  const bool fwd = direction == Direction::forward;
  Eigen::MatrixXd x = start;
  TrajectoryBatch out;
  out.times.push_back(fwd ? grid.front() : grid.back());
  out.states.push_back(x);
  for (int step = 0; step < k; ++step) {
    const int i = fwd ? step + 1 : k - step;  // interval index
    SimConfig local = cfg;
    local.seed = stream_key(cfg.seed, 101, static_cast<std::uint64_t>(i));
    Rng rng = Rng::keyed(local.seed);
    TrajectoryBatch part =
        simulate_span(ctrl, x, fwd ? grid.interval_left(i) : grid.interval_right(i),
                      fwd ? grid.interval_right(i) : grid.interval_left(i), local, ref, fwd, rng,
                      /*record_all=*/false);
    // part records the interval endpoints plus requested interior times; the
    // shared boundary state is recorded once, so the glued path is continuous
    for (std::size_t s = 1; s < part.times.size(); ++s) {
      out.times.push_back(part.times[s]);
      out.states.push_back(std::move(part.states[s]));
    }
    x = out.states.back();
  }
  return out;
}

TrajectoryBatch rollout_full(const ControlField& ctrl, const MarginalDataset& dataset,
                             Direction direction, const SimConfig& cfg,
                             const ReferenceProcess& ref) {
  const bool fwd = direction == Direction::forward;
  const Eigen::MatrixXd& start =
      fwd ? dataset.samples_at(0) : dataset.samples_at(dataset.num_snapshots() - 1);
  return rollout_from(ctrl, start, dataset.grid(), direction, cfg, ref);
}

}  // namespace msbm
