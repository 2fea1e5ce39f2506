#include "msbm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace msbm {

void MetricConfig::validate() const {
  if (swd_projections < 1) throw std::invalid_argument("MetricConfig: projections must be >= 1");
  if (wasserstein_max_n < 1) {
    throw std::invalid_argument("MetricConfig: wasserstein_max_n must be >= 1");
  }
  if (!(mmd_fixed_bandwidth > 0.0)) {
    throw std::invalid_argument("MetricConfig: fixed bandwidth must be positive");
  }
}

double quantile_w2_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("quantile_w2_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  // both quantile functions are piecewise constant; integrate over the merged
  // breakpoints of {i/n} and {j/m}
  double w2sq = 0.0, q = 0.0;
  int ia = 0, ib = 0;
  while (ia < n && ib < m) {
    const double qa = static_cast<double>(ia + 1) / n;
    const double qb = static_cast<double>(ib + 1) / m;
    const double q_next = std::min(qa, qb);
    const double diff = a[static_cast<std::size_t>(ia)] - b[static_cast<std::size_t>(ib)];
    w2sq += (q_next - q) * diff * diff;
    q = q_next;
    if (qa <= q_next) ++ia;
    if (qb <= q_next) ++ib;
  }
  return std::sqrt(std::max(0.0, w2sq));
}

double sliced_wasserstein(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                          const MetricConfig& cfg, Rng& rng) {
  cfg.validate();
  if (A.cols() != B.cols()) throw std::invalid_argument("sliced_wasserstein: dimension mismatch");
  if (A.cols() < 1) throw std::invalid_argument("sliced_wasserstein: zero-dimensional input");
  if (A.rows() < 1 || B.rows() < 1) throw std::invalid_argument("sliced_wasserstein: empty input");
  const int d = static_cast<int>(A.cols());
  double acc = 0.0;
  std::vector<double> pa(static_cast<std::size_t>(A.rows()));
  std::vector<double> pb(static_cast<std::size_t>(B.rows()));
  for (int l = 0; l < cfg.swd_projections; ++l) {
    Eigen::VectorXd dir = rng.normal_vector(d);
    double norm = dir.norm();
    while (norm == 0.0) {
      dir = rng.normal_vector(d);
      norm = dir.norm();
    }
    dir /= norm;
    Eigen::VectorXd qa = A * dir;
    Eigen::VectorXd qb = B * dir;
    for (Eigen::Index i = 0; i < qa.size(); ++i) pa[static_cast<std::size_t>(i)] = qa[i];
    for (Eigen::Index i = 0; i < qb.size(); ++i) pb[static_cast<std::size_t>(i)] = qb[i];
    const double w = quantile_w2_1d(pa, pb);
    acc += w * w;
  }
  return std::sqrt(acc / cfg.swd_projections);
}

namespace {

double median_pairwise_distance(const Eigen::MatrixXd& pooled) {
  const int n = static_cast<int>(pooled.rows());
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    }
  }
  if (dists.empty()) return 0.0;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2),
                   dists.end());
  return dists[dists.size() / 2];
}

double kernel_block_sum(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double gamma) {
  double s = 0.0;
  for (int i = 0; i < A.rows(); ++i) {
    for (int j = 0; j < B.rows(); ++j) {
      s += std::exp(-gamma * (A.row(i) - B.row(j)).squaredNorm());
    }
  }
  return s;
}

Eigen::MatrixXd maybe_subsample(const Eigen::MatrixXd& X, int target, Rng& rng) {
  if (X.rows() <= target) return X;
  std::vector<int> idx = rng.sample_without_replacement(static_cast<int>(X.rows()), target);
  std::sort(idx.begin(), idx.end());
  Eigen::MatrixXd out(target, X.cols());
  for (int r = 0; r < target; ++r) out.row(r) = X.row(idx[static_cast<std::size_t>(r)]);
  return out;
}

}  // namespace

double mmd_rbf(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const MetricConfig& cfg) {
  cfg.validate();
  if (A.cols() != B.cols()) throw std::invalid_argument("mmd_rbf: dimension mismatch");
  if (A.rows() < 1 || B.rows() < 1) throw std::invalid_argument("mmd_rbf: empty input");
  double h = cfg.mmd_fixed_bandwidth;
  if (cfg.mmd_bandwidth_rule == MetricConfig::Bandwidth::median) {
    Eigen::MatrixXd pooled(A.rows() + B.rows(), A.cols());
    pooled.topRows(A.rows()) = A;
    pooled.bottomRows(B.rows()) = B;
    h = median_pairwise_distance(pooled);
    if (h == 0.0) h = 1.0;  // all-identical pool; documented fallback
  }
  const double gamma = 1.0 / (2.0 * h * h);
  const double na = static_cast<double>(A.rows());
  const double nb = static_cast<double>(B.rows());
  const double mmd2 = kernel_block_sum(A, A, gamma) / (na * na) +
                      kernel_block_sum(B, B, gamma) / (nb * nb) -
                      2.0 * kernel_block_sum(A, B, gamma) / (na * nb);
  return std::max(0.0, mmd2);
}

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  // Jonker-Volgenant style shortest augmenting path with dual potentials,
  // O(n^3); 1-based internal indexing, column 0 is the virtual root.
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("solve_assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);    // row matched to column j
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);  // predecessor column
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[static_cast<std::size_t>(j)] > 0) {
      row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    }
  }
  return row_to_col;
}

double wasserstein_exact(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int p,
                         const MetricConfig& cfg) {
  cfg.validate();
  if (p != 1 && p != 2) throw std::invalid_argument("wasserstein_exact: p must be 1 or 2");
  if (A.cols() != B.cols()) throw std::invalid_argument("wasserstein_exact: dimension mismatch");
  if (A.rows() < 1 || B.rows() < 1) throw std::invalid_argument("wasserstein_exact: empty input");
  const int n = std::min({static_cast<int>(A.rows()), static_cast<int>(B.rows()),
                          cfg.wasserstein_max_n});
  Rng rng_a = Rng::keyed(cfg.seed, 11);
  Rng rng_b = Rng::keyed(cfg.seed, 12);
  const Eigen::MatrixXd As = maybe_subsample(A, n, rng_a);
  const Eigen::MatrixXd Bs = maybe_subsample(B, n, rng_b);
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double d2 = (As.row(i) - Bs.row(j)).squaredNorm();
      cost(i, j) = p == 1 ? std::sqrt(d2) : d2;
    }
  }
  const std::vector<int> match = solve_assignment(cost);
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += cost(i, match[static_cast<std::size_t>(i)]);
  const double mean = total / n;
  return p == 1 ? mean : std::sqrt(mean);
}

ProtocolSpec ProtocolSpec::parse(const std::string& text) {
  ProtocolSpec spec;
  if (text == "from_t0") {
    spec.kind = Protocol::from_t0;
  } else if (text == "from_prev") {
    spec.kind = Protocol::from_prev;
  } else if (text.rfind("leave_one_out", 0) == 0) {
    spec.kind = Protocol::leave_one_out;
    const auto colon = text.find(':');
    if (colon != std::string::npos) spec.index = std::stoi(text.substr(colon + 1));
  } else {
    throw std::invalid_argument("unknown protocol: " + text);
  }
  return spec;
}

std::string ProtocolSpec::name() const {
  switch (kind) {
    case Protocol::from_t0:
      return "from_t0";
    case Protocol::from_prev:
      return "from_prev";
    case Protocol::leave_one_out:
      return index < 0 ? "leave_one_out" : "leave_one_out:" + std::to_string(index);
  }
  return "?";
}

nlohmann::json MetricConfig::to_json() const {
  return nlohmann::json{
      {"swd_projections", swd_projections},
      {"mmd_bandwidth_rule", mmd_bandwidth_rule == Bandwidth::median ? "median" : "fixed"},
      {"mmd_fixed_bandwidth", mmd_fixed_bandwidth},
      {"wasserstein_max_n", wasserstein_max_n},
      {"seed", seed}};
}

MetricConfig MetricConfig::from_json(const nlohmann::json& j) {
  MetricConfig c;
  c.swd_projections = j.value("swd_projections", c.swd_projections);
  const std::string rule = j.value("mmd_bandwidth_rule", "median");
  if (rule == "median") c.mmd_bandwidth_rule = Bandwidth::median;
  else if (rule == "fixed") c.mmd_bandwidth_rule = Bandwidth::fixed;
  else throw std::invalid_argument("MetricConfig: unknown bandwidth rule " + rule);
  c.mmd_fixed_bandwidth = j.value("mmd_fixed_bandwidth", c.mmd_fixed_bandwidth);
  c.wasserstein_max_n = j.value("wasserstein_max_n", c.wasserstein_max_n);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const EvalRow& r : rows) {
    rows_json.push_back({{"time", r.time},
                         {"swd", r.swd},
                         {"mmd", r.mmd},
                         {"w1", r.w1},
                         {"w2", r.w2},
                         {"n_model", r.n_model},
                         {"n_data", r.n_data},
                         {"subsampled", r.subsampled}});
  }
  return nlohmann::json{{"protocol", protocol}, {"seed", seed}, {"rows", rows_json}};
}

double EvalReport::mean_of(const std::string& metric) const {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const EvalRow& r : rows) {
    if (metric == "swd") s += r.swd;
    else if (metric == "mmd") s += r.mmd;
    else if (metric == "w1") s += r.w1;
    else if (metric == "w2") s += r.w2;
    else throw std::invalid_argument("unknown metric: " + metric);
  }
  return s / static_cast<double>(rows.size());
}

EvalRow metric_row(double time, const Eigen::MatrixXd& model, const Eigen::MatrixXd& data,
                   const MetricConfig& cfg, Rng& rng) {
  EvalRow row;
  row.time = time;
  row.n_model = static_cast<int>(model.rows());
  row.n_data = static_cast<int>(data.rows());
  row.subsampled = model.rows() > cfg.wasserstein_max_n || data.rows() > cfg.wasserstein_max_n;
  row.swd = sliced_wasserstein(model, data, cfg, rng);
  row.mmd = mmd_rbf(model, data, cfg);
  row.w1 = wasserstein_exact(model, data, 1, cfg);
  row.w2 = wasserstein_exact(model, data, 2, cfg);
  return row;
}

EvalReport evaluate_protocol(const ControlFunction& forward_ctrl, const MarginalDataset& dataset,
                             const ProtocolSpec& protocol, const MetricConfig& metric_cfg,
                             const SimConfig& sim_cfg, const ReferenceProcess& ref) {
  metric_cfg.validate();
  sim_cfg.validate();
  const TimeGrid& grid = dataset.grid();
  EvalReport report;
  report.protocol = protocol.name();
  report.seed = sim_cfg.seed;
  Rng metric_rng = Rng::keyed(metric_cfg.seed, 7001);
  const ControlField field = control_field(forward_ctrl);

  switch (protocol.kind) {
    case Protocol::from_t0: {
      TrajectoryBatch traj = rollout_full(field, dataset, Direction::forward, sim_cfg, ref);
      for (int i = 1; i < grid.num_times(); ++i) {
        report.rows.push_back(metric_row(grid.time(i), traj.at_time(grid.time(i)),
                                         dataset.samples_at(i), metric_cfg, metric_rng));
      }
      break;
    }
    case Protocol::from_prev: {
      for (int i = 1; i < grid.num_times(); ++i) {
        SimConfig local = sim_cfg;
        local.seed = stream_key(sim_cfg.seed, 202, static_cast<std::uint64_t>(i));
        TrajectoryBatch traj = simulate_forward(field, dataset.samples_at(i - 1), grid.time(i - 1),
                                                grid.time(i), local, ref);
        report.rows.push_back(metric_row(grid.time(i), traj.states.back(), dataset.samples_at(i),
                                         metric_cfg, metric_rng));
      }
      break;
    }
    case Protocol::leave_one_out: {
      std::vector<int> targets;
      if (protocol.index >= 0) {
        if (protocol.index <= 0 || protocol.index >= grid.num_times() - 1) {
          throw std::invalid_argument("leave_one_out: index must be an interior time");
        }
        targets.push_back(protocol.index);
      } else {
        targets = dataset.held_out_indices();
        if (targets.empty()) {
          throw std::invalid_argument("leave_one_out: dataset has no held-out times");
        }
      }
      for (int i : targets) {
        TrajectoryBatch traj;
        if (protocol.start_from_previous) {
          SimConfig local = sim_cfg;
          local.seed = stream_key(sim_cfg.seed, 203, static_cast<std::uint64_t>(i));
          traj = simulate_forward(field, dataset.samples_at(i - 1), grid.time(i - 1), grid.time(i),
                                  local, ref);
          report.rows.push_back(metric_row(grid.time(i), traj.states.back(), dataset.samples_at(i),
                                           metric_cfg, metric_rng));
        } else {
          traj = rollout_full(field, dataset, Direction::forward, sim_cfg, ref);
          report.rows.push_back(metric_row(grid.time(i), traj.at_time(grid.time(i)),
                                           dataset.samples_at(i), metric_cfg, metric_rng));
        }
      }
      break;
    }
  }
  return report;
}

}  // namespace msbm
