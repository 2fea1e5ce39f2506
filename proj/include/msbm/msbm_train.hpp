#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "msbm/control_net.hpp"
#include "msbm/coupling.hpp"
#include "msbm/reference_bridge.hpp"
#include "msbm/sde_sim.hpp"
#include "msbm/time_grid.hpp"

namespace msbm {

struct MsbmConfig {
  enum class Mode { msbm, naive };

  int outer_iterations = 10;  // N
  int inner_steps = 1000;     // S, per direction per outer iteration
  int batch_size = 256;
  double sigma = 0.5;
  double learning_rate = 1e-3;
  int steps_per_interval = 30;
  std::uint64_t seed = 0;
  Mode mode = Mode::msbm;

  int threads = 1;  // interval-level parallelism; results identical for any value
  int hidden = 64;
  int blocks = 2;
  int time_embed = 32;
  double ema_decay = 0.999;
  int eval_every = 1;  // marginal-fit tracking cadence (0 disables)
  int eval_max_n = 512;
  // data rows are replicated this many times when simulating a refresh,
  // shrinking the coupling's ensemble noise; 1 = one path per data row
  int refresh_multiplicity = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static MsbmConfig from_json(const nlohmann::json& j);
};

struct TrainReport {
  std::string mode;
  std::vector<double> forward_loss;   // per outer iteration (mean over steps)
  std::vector<double> backward_loss;  // per outer iteration
  std::vector<double> eval_times;     // grid times scored by the tracker
  // marginal_w2[0] is the untrained (zero-control) baseline; row n+1 follows
  // outer iteration n. Empty when eval_every == 0.
  std::vector<std::vector<double>> marginal_w2;

  struct PhaseClock {
    double fit_backward = 0, refresh_backward = 0, fit_forward = 0, refresh_forward = 0, eval = 0;
  };
  std::vector<PhaseClock> wall_clock;  // seconds, per outer iteration
  nlohmann::json config;

  // include_timing=false drops the wall-clock section, leaving only content
  // that is bit-reproducible across runs
  nlohmann::json to_json(bool include_timing = true) const;
};

struct TrainingDiverged : std::runtime_error {
  TrainingDiverged(const std::string& what, TrainReport partial)
      : std::runtime_error(what), report(std::move(partial)) {}
  TrainReport report;
};

struct TrainResult {
  ControlFunction forward_ctrl;   // v, training parameters
  ControlFunction backward_ctrl;  // u, training parameters
  TrainerState forward_state;
  TrainerState backward_state;
  std::vector<IntervalCoupling> final_couplings;
  TrainReport report;

  ControlFunction forward_ema() const { return ema_swap(forward_ctrl, forward_state); }
  ControlFunction backward_ema() const { return ema_swap(backward_ctrl, backward_state); }
};

// Independent pairing: m = min(n_{i-1}, n_i) rows, each side a uniform
// subsample without replacement in shuffled order.
std::vector<IntervalCoupling> init_couplings(const MarginalDataset& dataset, std::uint64_t seed);

struct TrainingBatch {
  Eigen::VectorXd ts;
  Eigen::MatrixXd x;
  Eigen::MatrixXd target;
};

// `count` tuples for one interval: t uniform inside the interval (resampled
// away from the singular endpoint), coupling row uniform, x_t from the bridge,
// target from the matching score function.
TrainingBatch make_interval_batch(const IntervalCoupling& coupling, const TimeGrid& grid,
                                  const ReferenceProcess& ref, int count, Direction direction,
                                  Rng& rng);

// Whole-horizon batch with t ~ Uniform[t_0, t_k]; longer intervals receive
// proportionally more tuples.
std::vector<RegressionSample> make_training_batch(const std::vector<IntervalCoupling>& couplings,
                                                  const TimeGrid& grid, const ReferenceProcess& ref,
                                                  int batch_size, Direction direction, Rng& rng);

// Local refresh: the data-side endpoint is the snapshot verbatim, the other
// side is simulated across the single interval.
IntervalCoupling refresh_coupling_interval(const ControlField& ctrl, const MarginalDataset& dataset,
                                           Direction direction, int interval,
                                           const MsbmConfig& cfg, const ReferenceProcess& ref,
                                           std::uint64_t phase_seed);
std::vector<IntervalCoupling> refresh_couplings(const ControlField& ctrl,
                                                const MarginalDataset& dataset, Direction direction,
                                                const MsbmConfig& cfg, const ReferenceProcess& ref,
                                                std::uint64_t phase_seed);

// Naive refresh: one global rollout anchored only at rho_0 (forward) or
// rho_T (backward); interior endpoints are read off the simulated path.
std::vector<IntervalCoupling> refresh_couplings_naive(const ControlField& ctrl,
                                                      const MarginalDataset& dataset,
                                                      Direction direction, const MsbmConfig& cfg,
                                                      const ReferenceProcess& ref,
                                                      std::uint64_t phase_seed);

TrainResult run_msbm(const MarginalDataset& dataset, const MsbmConfig& cfg);
TrainResult run_naive_baseline(const MarginalDataset& dataset, const MsbmConfig& cfg);

// Two-marginal entry point: validates |T| == 2 and runs the identical code
// path as run_msbm.
TrainResult run_bridge_matching(const MarginalDataset& dataset, const MsbmConfig& cfg);

// Extends a finished run by extra outer iterations; equivalent to having run
// outer_iterations + extra from scratch under the same seed.
void continue_msbm(TrainResult& result, const MarginalDataset& dataset, const MsbmConfig& cfg,
                   int extra_iterations);

}  // namespace msbm
