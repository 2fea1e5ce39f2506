#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "msbm/control_net.hpp"
#include "msbm/reference_bridge.hpp"
#include "msbm/rng.hpp"
#include "msbm/sde_sim.hpp"
#include "msbm/time_grid.hpp"

namespace msbm {

struct MetricConfig {
  int swd_projections = 128;
  enum class Bandwidth { median, fixed } mmd_bandwidth_rule = Bandwidth::median;
  double mmd_fixed_bandwidth = 1.0;
  int wasserstein_max_n = 2000;  // larger inputs are subsampled with `seed`
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static MetricConfig from_json(const nlohmann::json& j);
};

// Exact 2-Wasserstein between two 1-D empirical measures via their quantile
// functions; handles unequal sample counts.
double quantile_w2_1d(std::vector<double> a, std::vector<double> b);

// Average over random unit directions of the projected 1-D W2 (L2 average).
double sliced_wasserstein(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                          const MetricConfig& cfg, Rng& rng);

// Biased V-statistic MMD^2 with an RBF kernel. The median heuristic uses the
// median pairwise distance over the pooled points; an all-identical pool
// falls back to bandwidth 1.
double mmd_rbf(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const MetricConfig& cfg);

// Exact assignment-based W_p for p in {1, 2}: mean matched cost for p=1,
// root-mean matched squared cost for p=2. Inputs are subsampled to
// min(n, m, cfg.wasserstein_max_n) with the config seed when needed.
double wasserstein_exact(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int p,
                         const MetricConfig& cfg);

// Minimum-cost perfect matching on a square cost matrix; returns the column
// assigned to each row.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

enum class Protocol { from_t0, from_prev, leave_one_out };

struct ProtocolSpec {
  Protocol kind = Protocol::from_t0;
  // leave_one_out: evaluate this held-out time index, or all held-out times
  // when negative.
  int index = -1;
  // leave_one_out rollouts start at t_0 by default; `true` starts from the
  // snapshot just before the evaluated time instead.
  bool start_from_previous = false;

  static ProtocolSpec parse(const std::string& text);
  std::string name() const;
};

struct EvalRow {
  double time = 0.0;
  double swd = 0.0, mmd = 0.0, w1 = 0.0, w2 = 0.0;
  int n_model = 0, n_data = 0;
  bool subsampled = false;
};

struct EvalReport {
  std::string protocol;
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;

  double mean_of(const std::string& metric) const;
  nlohmann::json to_json() const;
};

EvalRow metric_row(double time, const Eigen::MatrixXd& model, const Eigen::MatrixXd& data,
                   const MetricConfig& cfg, Rng& rng);

// Simulates with the forward control per the protocol and scores the
// generated marginals against the dataset snapshots.
EvalReport evaluate_protocol(const ControlFunction& forward_ctrl, const MarginalDataset& dataset,
                             const ProtocolSpec& protocol, const MetricConfig& metric_cfg,
                             const SimConfig& sim_cfg, const ReferenceProcess& ref);

}  // namespace msbm
