#include "msbm/reference_bridge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msbm {

ReferenceProcess::ReferenceProcess(double sigma, DriftKind kind, double a, double b)
    : sigma_(sigma), kind_(kind), a_(a), b_(b) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("ReferenceProcess: sigma must be positive");
  }
}

ReferenceProcess ReferenceProcess::brownian(double sigma) {
  return ReferenceProcess(sigma, DriftKind::zero, 0.0, 0.0);
}

ReferenceProcess ReferenceProcess::affine(double sigma, double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b)) {
    throw std::invalid_argument("ReferenceProcess: non-finite drift coefficients");
  }
  return ReferenceProcess(sigma, DriftKind::affine, a, b);
}

Eigen::VectorXd ReferenceProcess::drift(double /*t*/, const Eigen::VectorXd& x) const {
  if (kind_ == DriftKind::zero) return Eigen::VectorXd::Zero(x.size());
  return (a_ * x).array() + b_;
}

Eigen::MatrixXd ReferenceProcess::drift_batch(double /*t*/, const Eigen::MatrixXd& X) const {
  if (kind_ == DriftKind::zero) return Eigen::MatrixXd::Zero(X.rows(), X.cols());
  return (a_ * X).array() + b_;
}

void BridgeQuery::validate() const {
  if (!(t_left < t_right)) throw std::invalid_argument("BridgeQuery: t_left must precede t_right");
  if (!(t > t_left && t < t_right)) {
    throw std::domain_error("BridgeQuery: t must be strictly interior");
  }
  if (x_left.size() != x_right.size()) {
    throw std::invalid_argument("BridgeQuery: endpoint dimension mismatch");
  }
  if (!x_left.allFinite() || !x_right.allFinite()) {
    throw std::invalid_argument("BridgeQuery: non-finite endpoint");
  }
}

namespace {
void require_closed_form(const ReferenceProcess& ref, const char* op) {
  if (!ref.has_closed_form_bridge()) {
    throw std::runtime_error(std::string(op) + ": closed-form bridge requires a zero-drift reference");
  }
}
}  // namespace

BridgeMoments bridge_mean_var(const BridgeQuery& q, const ReferenceProcess& ref) {
  q.validate();
  require_closed_form(ref, "bridge_mean_var");
  const double len = q.t_right - q.t_left;
  const double s = (q.t - q.t_left) / len;
  BridgeMoments out;
  out.mean = (1.0 - s) * q.x_left + s * q.x_right;
  out.var = ref.sigma() * ref.sigma() * (q.t - q.t_left) * (q.t_right - q.t) / len;
  return out;
}

Eigen::VectorXd sample_bridge(const BridgeQuery& q, const ReferenceProcess& ref, Rng& rng) {
  const BridgeMoments m = bridge_mean_var(q, ref);
  const double sd = std::sqrt(m.var);
  return m.mean + sd * rng.normal_vector(static_cast<int>(m.mean.size()));
}

Eigen::MatrixXd sample_bridge_batch(const Eigen::VectorXd& ts, double t_left, double t_right,
                                    const Eigen::MatrixXd& x_left, const Eigen::MatrixXd& x_right,
                                    const ReferenceProcess& ref, Rng& rng) {
  require_closed_form(ref, "sample_bridge_batch");
  if (x_left.rows() != x_right.rows() || x_left.cols() != x_right.cols() ||
      ts.size() != x_left.rows()) {
    throw std::invalid_argument("sample_bridge_batch: shape mismatch");
  }
  const double len = t_right - t_left;
  if (!(len > 0.0)) throw std::invalid_argument("sample_bridge_batch: empty interval");
  Eigen::MatrixXd out(x_left.rows(), x_left.cols());
  const double sig2 = ref.sigma() * ref.sigma();
  for (int j = 0; j < out.rows(); ++j) {
    const double t = ts[j];
    if (!(t > t_left && t < t_right)) {
      throw std::domain_error("sample_bridge_batch: query time not interior");
    }
    const double s = (t - t_left) / len;
    const double sd = std::sqrt(sig2 * (t - t_left) * (t_right - t) / len);
    for (int c = 0; c < out.cols(); ++c) {
      out(j, c) = (1.0 - s) * x_left(j, c) + s * x_right(j, c) + sd * rng.normal();
    }
  }
  return out;
}

Eigen::VectorXd forward_score_target(const Eigen::VectorXd& x_t, const Eigen::VectorXd& x_next,
                                     double t, double t_next, const ReferenceProcess& ref) {
  require_closed_form(ref, "forward_score_target");
  if (!(t < t_next)) throw std::domain_error("forward_score_target: requires t < t_next");
  return (x_next - x_t) / (ref.sigma() * (t_next - t));
}

Eigen::VectorXd backward_score_target(const Eigen::VectorXd& x_t, const Eigen::VectorXd& x_prev,
                                      double t, double t_prev, const ReferenceProcess& ref) {
  require_closed_form(ref, "backward_score_target");
  if (!(t > t_prev)) throw std::domain_error("backward_score_target: requires t > t_prev");
  return (x_prev - x_t) / (ref.sigma() * (t - t_prev));
}

TrajectoryBatch sample_reciprocal_path(const std::vector<IntervalCoupling>& couplings,
                                       const TimeGrid& grid, std::vector<double> query_times,
                                       const ReferenceProcess& ref, Rng& rng) {
  validate_chain(couplings, grid.num_intervals());
  const int batch = couplings.front().rows();
  for (const IntervalCoupling& c : couplings) {
    if (c.rows() != batch) {
      throw std::invalid_argument("sample_reciprocal_path: couplings must share one row count");
    }
  }
  std::sort(query_times.begin(), query_times.end());
  query_times.erase(std::unique(query_times.begin(), query_times.end()), query_times.end());

  TrajectoryBatch out;
  out.times = query_times;
  out.states.reserve(query_times.size());
  for (double t : query_times) {
    if (t < grid.front() || t > grid.back()) {
      throw std::domain_error("sample_reciprocal_path: query time outside grid range");
    }
    // exact grid hits return the coupling endpoints unchanged
    const auto& ts = grid.times();
    auto hit = std::lower_bound(ts.begin(), ts.end(), t);
    if (hit != ts.end() && *hit == t) {
      const int j = static_cast<int>(hit - ts.begin());
      out.states.push_back(j == 0 ? couplings.front().left
                                  : couplings[static_cast<std::size_t>(j - 1)].right);
      continue;
    }
    const int i = grid.interval_index(t, Direction::forward);
    const IntervalCoupling& c = couplings[static_cast<std::size_t>(i - 1)];
    Eigen::VectorXd tcol = Eigen::VectorXd::Constant(batch, t);
    out.states.push_back(sample_bridge_batch(tcol, grid.interval_left(i), grid.interval_right(i),
                                             c.left, c.right, ref, rng));
  }
  return out;
}

}  // namespace msbm
