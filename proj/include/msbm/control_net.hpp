#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "msbm/rng.hpp"

namespace msbm {

enum class ControlRole { forward, backward };

// Residual MLP on concat(x, time_embedding(t)). time_embed is the sinusoidal
// embedding width (even); blocks is the number of two-layer residual blocks.
struct ControlArch {
  int dim = 1;
  int time_embed = 32;
  int hidden = 64;
  int blocks = 2;

  int input_width() const { return dim + time_embed; }
  int param_count() const;
  void validate() const;

  bool operator==(const ControlArch&) const = default;
};

// The trainable control (t, x) -> R^d. One network is shared across all
// sub-intervals, so the composite control is continuous in t by construction.
// The output layer is zero-initialized: an untrained control is identically 0
// and the initial model coincides with the reference process.
class ControlFunction {
 public:
  ControlFunction(ControlArch arch, ControlRole role, std::uint64_t init_seed);

  const ControlArch& arch() const { return arch_; }
  ControlRole role() const { return role_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& params() { return params_; }

  Eigen::VectorXd eval(double t, const Eigen::VectorXd& x) const;
  // ts[j] pairs with row j of X
  Eigen::MatrixXd eval_batch(const Eigen::VectorXd& ts, const Eigen::MatrixXd& X) const;

  // Adds d/dparams of sum_j ||net(ts_j, X_j) - targets_j||^2 into grad and
  // returns that squared-error sum. grad must have param_count() entries.
  double accumulate_squared_error(const Eigen::VectorXd& ts, const Eigen::MatrixXd& X,
                                  const Eigen::MatrixXd& targets, Eigen::VectorXd& grad) const;

  Eigen::MatrixXd time_embedding(const Eigen::VectorXd& ts) const;

 private:
  ControlArch arch_;
  ControlRole role_;
  Eigen::VectorXd params_;
};

struct RegressionSample {
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd target;
};

// Adam moments plus the EMA shadow used at evaluation time.
struct TrainerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double ema_decay = 0.999;
  std::int64_t step = 0;
  Eigen::VectorXd m;    // first moment
  Eigen::VectorXd v;    // second moment
  Eigen::VectorXd ema;  // shadow parameters

  TrainerState() = default;
  TrainerState(const ControlFunction& ctrl, double lr, double ema_decay);
};

// One Adam step on the mean-gradient, then EMA shadow refresh.
void apply_update(ControlFunction& ctrl, TrainerState& state, const Eigen::VectorXd& grad_mean);

// Mean-squared-error regression step over the batch; returns the pre-update
// loss (mean over samples of the squared residual norm). Aborts with a
// diagnostic naming the offending t range if the loss is non-finite.
double regression_step(ControlFunction& ctrl, const Eigen::VectorXd& ts, const Eigen::MatrixXd& X,
                       const Eigen::MatrixXd& targets, TrainerState& state);
double regression_step(ControlFunction& ctrl, const std::vector<RegressionSample>& batch,
                       TrainerState& state);

// Control with the EMA shadow parameters; training parameters are untouched.
ControlFunction ema_swap(const ControlFunction& ctrl, const TrainerState& state);

}  // namespace msbm
