#include "msbm/msbm_train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "msbm/metrics.hpp"
#include "msbm/parallel.hpp"

namespace msbm {

namespace {

// Stream tags; every random decision is keyed on (seed, tag, ...) so results
// do not depend on thread count or interval processing order.
enum : std::uint64_t {
  kTagInitCoupling = 501,
  kTagFitInterval = 601,
  kTagFitCounts = 602,
  kTagInitForward = 701,
  kTagInitBackward = 702,
  kTagEvalMetric = 801,
  kTagEvalSim = 802,
  kTagPhase = 901,
};

// Phases within one outer iteration, in execution order.
enum : std::uint64_t {
  kPhaseFitBackward = 0,
  kPhaseRefreshBackward = 1,
  kPhaseFitForward = 2,
  kPhaseRefreshForward = 3,
  kPhaseEval = 4,
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void MsbmConfig::validate() const {
  if (outer_iterations < 1) throw std::invalid_argument("MsbmConfig: outer_iterations must be >= 1");
  if (inner_steps < 1) throw std::invalid_argument("MsbmConfig: inner_steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("MsbmConfig: batch_size must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("MsbmConfig: sigma must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("MsbmConfig: learning_rate must be positive");
  if (steps_per_interval < 1) {
    throw std::invalid_argument("MsbmConfig: steps_per_interval must be >= 1");
  }
  if (threads < 1) throw std::invalid_argument("MsbmConfig: threads must be >= 1");
  if (eval_every < 0) throw std::invalid_argument("MsbmConfig: eval_every must be >= 0");
  if (refresh_multiplicity < 1) {
    throw std::invalid_argument("MsbmConfig: refresh_multiplicity must be >= 1");
  }
  if (eval_max_n < 1) throw std::invalid_argument("MsbmConfig: eval_max_n must be >= 1");
  ControlArch{1, time_embed, hidden, blocks}.validate();
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) {
    throw std::invalid_argument("MsbmConfig: ema_decay must lie in (0, 1)");
  }
}

nlohmann::json MsbmConfig::to_json() const {
  return nlohmann::json{{"mode", mode == Mode::msbm ? "msbm" : "naive"},
                        {"outer_iterations", outer_iterations},
                        {"inner_steps", inner_steps},
                        {"batch_size", batch_size},
                        {"sigma", sigma},
                        {"learning_rate", learning_rate},
                        {"steps_per_interval", steps_per_interval},
                        {"seed", seed},
                        {"threads", threads},
                        {"hidden", hidden},
                        {"blocks", blocks},
                        {"time_embed", time_embed},
                        {"ema_decay", ema_decay},
                        {"eval_every", eval_every},
                        {"eval_max_n", eval_max_n},
                        {"refresh_multiplicity", refresh_multiplicity}};
}

MsbmConfig MsbmConfig::from_json(const nlohmann::json& j) {
  MsbmConfig c;
  const std::string mode = j.value("mode", "msbm");
  if (mode == "msbm") c.mode = Mode::msbm;
  else if (mode == "naive") c.mode = Mode::naive;
  else throw std::invalid_argument("MsbmConfig: unknown mode " + mode);
  c.outer_iterations = j.value("outer_iterations", c.outer_iterations);
  c.inner_steps = j.value("inner_steps", c.inner_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.sigma = j.value("sigma", c.sigma);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.steps_per_interval = j.value("steps_per_interval", c.steps_per_interval);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.hidden = j.value("hidden", c.hidden);
  c.blocks = j.value("blocks", c.blocks);
  c.time_embed = j.value("time_embed", c.time_embed);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_max_n = j.value("eval_max_n", c.eval_max_n);
  c.refresh_multiplicity = j.value("refresh_multiplicity", c.refresh_multiplicity);
  return c;
}

nlohmann::json TrainReport::to_json(bool include_timing) const {
  nlohmann::json j;
  j["mode"] = mode;
  j["forward_loss"] = forward_loss;
  j["backward_loss"] = backward_loss;
  j["eval_times"] = eval_times;
  j["marginal_w2"] = marginal_w2;
  j["config"] = config;
  if (include_timing) {
    nlohmann::json clocks = nlohmann::json::array();
    for (const PhaseClock& c : wall_clock) {
      clocks.push_back({{"fit_backward", c.fit_backward},
                        {"refresh_backward", c.refresh_backward},
                        {"fit_forward", c.fit_forward},
                        {"refresh_forward", c.refresh_forward},
                        {"eval", c.eval}});
    }
    j["wall_clock"] = clocks;
  }
  return j;
}

std::vector<IntervalCoupling> init_couplings(const MarginalDataset& dataset, std::uint64_t seed) {
  const TimeGrid& grid = dataset.grid();
  std::vector<IntervalCoupling> couplings;
  for (int i = 1; i <= grid.num_intervals(); ++i) {
    const Eigen::MatrixXd& left = dataset.samples_at(i - 1);
    const Eigen::MatrixXd& right = dataset.samples_at(i);
    const int m = static_cast<int>(std::min(left.rows(), right.rows()));
    Rng rng = Rng::keyed(seed, kTagInitCoupling, static_cast<std::uint64_t>(i));
    const std::vector<int> li = rng.sample_without_replacement(static_cast<int>(left.rows()), m);
    const std::vector<int> ri = rng.sample_without_replacement(static_cast<int>(right.rows()), m);
    IntervalCoupling c;
    c.interval = i;
    c.left.resize(m, left.cols());
    c.right.resize(m, right.cols());
    for (int r = 0; r < m; ++r) {
      c.left.row(r) = left.row(li[static_cast<std::size_t>(r)]);
      c.right.row(r) = right.row(ri[static_cast<std::size_t>(r)]);
    }
    c.validate();
    couplings.push_back(std::move(c));
  }
  return couplings;
}

namespace {

// Draws one loss time inside interval i, resampling within epsilon of the
// singular endpoint (right endpoint forward, left endpoint backward) where
// the 1/dt score target would explode.
double draw_loss_time(const TimeGrid& grid, int interval, Direction dir, Rng& rng) {
  const double left = grid.interval_left(interval);
  const double right = grid.interval_right(interval);
  const double eps = 1e-6 * (right - left);
  double t = rng.uniform(left, right);
  if (dir == Direction::forward) {
    while (right - t < eps) t = rng.uniform(left, right);
  } else {
    while (t - left < eps) t = rng.uniform(left, right);
  }
  return t;
}

}  // namespace

TrainingBatch make_interval_batch(const IntervalCoupling& coupling, const TimeGrid& grid,
                                  const ReferenceProcess& ref, int count, Direction direction,
                                  Rng& rng) {
  if (count < 1) throw std::invalid_argument("make_interval_batch: count must be >= 1");
  coupling.validate();
  const int i = coupling.interval;
  const double left = grid.interval_left(i);
  const double right = grid.interval_right(i);
  const double len = right - left;
  const double sigma = ref.sigma();
  if (!ref.has_closed_form_bridge()) {
    throw std::runtime_error("make_interval_batch: requires a zero-drift reference");
  }
  const int d = coupling.dim();
  TrainingBatch batch;
  batch.ts.resize(count);
  batch.x.resize(count, d);
  batch.target.resize(count, d);
  for (int j = 0; j < count; ++j) {
    const double t = draw_loss_time(grid, i, direction, rng);
    const int row = static_cast<int>(rng.integer(coupling.rows()));
    const double s = (t - left) / len;
    const double sd = sigma * std::sqrt((t - left) * (right - t) / len);
    batch.ts[j] = t;
    for (int c = 0; c < d; ++c) {
      const double x = (1.0 - s) * coupling.left(row, c) + s * coupling.right(row, c) +
                       sd * rng.normal();
      batch.x(j, c) = x;
      batch.target(j, c) = direction == Direction::forward
                               ? (coupling.right(row, c) - x) / (sigma * (right - t))
                               : (coupling.left(row, c) - x) / (sigma * (t - left));
    }
  }
  return batch;
}

std::vector<RegressionSample> make_training_batch(const std::vector<IntervalCoupling>& couplings,
                                                  const TimeGrid& grid, const ReferenceProcess& ref,
                                                  int batch_size, Direction direction, Rng& rng) {
  validate_chain(couplings, grid.num_intervals());
  if (batch_size < 1) throw std::invalid_argument("make_training_batch: batch_size must be >= 1");
  std::vector<RegressionSample> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int j = 0; j < batch_size; ++j) {
    // t ~ Uniform[t_0, t_k]; the containing interval supplies the coupling
    const double t_pick = rng.uniform(grid.front(), grid.back());
    const int i = grid.interval_index(t_pick, Direction::forward);
    TrainingBatch one = make_interval_batch(couplings[static_cast<std::size_t>(i - 1)], grid, ref,
                                            1, direction, rng);
    RegressionSample s;
    s.t = one.ts[0];
    s.x = one.x.row(0).transpose();
    s.target = one.target.row(0).transpose();
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

// Data rows replicated `mult` times: the data side stays verbatim snapshot
// rows while the simulated ensemble grows, shrinking the per-refresh noise in
// the coupling's simulated marginal.
Eigen::MatrixXd replicate_rows(const Eigen::MatrixXd& m, int mult) {
  if (mult <= 1) return m;
  Eigen::MatrixXd out(m.rows() * mult, m.cols());
  for (int r = 0; r < mult; ++r) out.middleRows(r * m.rows(), m.rows()) = m;
  return out;
}

}  // namespace

IntervalCoupling refresh_coupling_interval(const ControlField& ctrl, const MarginalDataset& dataset,
                                           Direction direction, int interval,
                                           const MsbmConfig& cfg, const ReferenceProcess& ref,
                                           std::uint64_t phase_seed) {
  const TimeGrid& grid = dataset.grid();
  SimConfig sim;
  sim.steps_per_interval = cfg.steps_per_interval;
  // same keying as rollout_full so the one-interval case is bit-identical to
  // the naive global rollout
  sim.seed = stream_key(phase_seed, 101, static_cast<std::uint64_t>(interval));
  IntervalCoupling c;
  c.interval = interval;
  if (direction == Direction::forward) {
    c.left = replicate_rows(dataset.samples_at(interval - 1), cfg.refresh_multiplicity);
    TrajectoryBatch traj = simulate_forward(ctrl, c.left, grid.interval_left(interval),
                                            grid.interval_right(interval), sim, ref);
    c.right = traj.states.back();
  } else {
    c.right = replicate_rows(dataset.samples_at(interval), cfg.refresh_multiplicity);
    TrajectoryBatch traj = simulate_backward(ctrl, c.right, grid.interval_right(interval),
                                             grid.interval_left(interval), sim, ref);
    c.left = traj.states.back();
  }
  c.validate();
  return c;
}

std::vector<IntervalCoupling> refresh_couplings(const ControlField& ctrl,
                                                const MarginalDataset& dataset, Direction direction,
                                                const MsbmConfig& cfg, const ReferenceProcess& ref,
                                                std::uint64_t phase_seed) {
  const int k = dataset.grid().num_intervals();
  std::vector<IntervalCoupling> couplings(static_cast<std::size_t>(k));
  parallel_for_tasks(k, cfg.threads, [&](int idx) {
    couplings[static_cast<std::size_t>(idx)] = refresh_coupling_interval(
        ctrl, dataset, direction, idx + 1, cfg, ref, phase_seed);
  });
  return couplings;
}

std::vector<IntervalCoupling> refresh_couplings_naive(const ControlField& ctrl,
                                                      const MarginalDataset& dataset,
                                                      Direction direction, const MsbmConfig& cfg,
                                                      const ReferenceProcess& ref,
                                                      std::uint64_t phase_seed) {
  const TimeGrid& grid = dataset.grid();
  SimConfig sim;
  sim.steps_per_interval = cfg.steps_per_interval;
  sim.seed = phase_seed;
  // one rollout across [t_0, t_k]; only the global endpoint is anchored at
  // data, interior endpoints come from the simulated path
  TrajectoryBatch traj = rollout_full(ctrl, dataset, direction, sim, ref);
  std::vector<IntervalCoupling> couplings;
  for (int i = 1; i <= grid.num_intervals(); ++i) {
    IntervalCoupling c;
    c.interval = i;
    c.left = traj.at_time(grid.interval_left(i));
    c.right = traj.at_time(grid.interval_right(i));
    c.validate();
    couplings.push_back(std::move(c));
  }
  return couplings;
}

namespace {

// One fit phase: S regression steps on the current couplings. Per-interval
// tuple counts follow the global-uniform time law; each interval owns a
// private random stream and gradient buffer, summed in interval order before
// the single shared parameter update.
double run_fit_phase(ControlFunction& ctrl, TrainerState& state,
                     const std::vector<IntervalCoupling>& couplings, const TimeGrid& grid,
                     const ReferenceProcess& ref, const MsbmConfig& cfg, std::uint64_t iteration,
                     std::uint64_t phase, Direction dir) {
  const int k = grid.num_intervals();
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(k));
  for (int i = 1; i <= k; ++i) {
    streams.push_back(Rng::keyed(cfg.seed, kTagFitInterval, iteration, phase,
                                 static_cast<std::uint64_t>(i)));
  }
  Rng count_stream = Rng::keyed(cfg.seed, kTagFitCounts, iteration, phase);

  std::vector<Eigen::VectorXd> grads(static_cast<std::size_t>(k),
                                     Eigen::VectorXd::Zero(ctrl.param_count()));
  std::vector<double> loss_sums(static_cast<std::size_t>(k), 0.0);
  std::vector<int> counts(static_cast<std::size_t>(k), 0);

  double loss_acc = 0.0;
  for (int s = 0; s < cfg.inner_steps; ++s) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const double t = count_stream.uniform(grid.front(), grid.back());
      counts[static_cast<std::size_t>(grid.interval_index(t, Direction::forward) - 1)]++;
    }
    parallel_for_tasks(k, cfg.threads, [&](int idx) {
      const std::size_t ui = static_cast<std::size_t>(idx);
      grads[ui].setZero();
      loss_sums[ui] = 0.0;
      if (counts[ui] == 0) return;
      TrainingBatch batch = make_interval_batch(couplings[ui], grid, ref, counts[ui], dir,
                                                streams[ui]);
      loss_sums[ui] = ctrl.accumulate_squared_error(batch.ts, batch.x, batch.target, grads[ui]);
    });
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(ctrl.param_count());
    double loss_sum = 0.0;
    for (int i = 0; i < k; ++i) {
      grad += grads[static_cast<std::size_t>(i)];
      loss_sum += loss_sums[static_cast<std::size_t>(i)];
    }
    const double loss = loss_sum / cfg.batch_size;
    if (!std::isfinite(loss)) {
      throw std::runtime_error("fit phase diverged at outer iteration " +
                               std::to_string(iteration) + ", step " + std::to_string(s));
    }
    apply_update(ctrl, state, grad / cfg.batch_size);
    loss_acc += loss;
  }
  return loss_acc / cfg.inner_steps;
}

std::vector<double> eval_marginal_w2(const ControlFunction& v_ema, const MarginalDataset& dataset,
                                     const MsbmConfig& cfg, const ReferenceProcess& ref) {
  const TimeGrid& grid = dataset.grid();
  SimConfig sim;
  sim.steps_per_interval = cfg.steps_per_interval;
  // common random numbers across iterations: trend changes in the tracked
  // curve then reflect model movement, not fresh rollout noise
  sim.seed = stream_key(cfg.seed, kTagEvalSim);
  TrajectoryBatch traj = rollout_full(control_field(v_ema), dataset, Direction::forward, sim, ref);
  MetricConfig mcfg;
  mcfg.wasserstein_max_n = cfg.eval_max_n;
  mcfg.seed = stream_key(cfg.seed, kTagEvalMetric);
  std::vector<double> w2;
  for (int i = 1; i < grid.num_times(); ++i) {
    w2.push_back(
        wasserstein_exact(traj.at_time(grid.time(i)), dataset.samples_at(i), 2, mcfg));
  }
  return w2;
}

void msbm_loop(const MarginalDataset& dataset, const MsbmConfig& cfg, ControlFunction& v,
               ControlFunction& u, TrainerState& v_state, TrainerState& u_state,
               std::vector<IntervalCoupling>& couplings, TrainReport& report, int iter_begin,
               int iter_end) {
  const TimeGrid& grid = dataset.grid();
  const ReferenceProcess ref = ReferenceProcess::brownian(cfg.sigma);
  const bool naive = cfg.mode == MsbmConfig::Mode::naive;

  auto refresh = [&](const ControlField& field, Direction dir, std::uint64_t iter,
                     std::uint64_t phase) {
    const std::uint64_t phase_seed = stream_key(cfg.seed, kTagPhase, iter, phase);
    return naive ? refresh_couplings_naive(field, dataset, dir, cfg, ref, phase_seed)
                 : refresh_couplings(field, dataset, dir, cfg, ref, phase_seed);
  };

  if (iter_begin == 0 && cfg.eval_every > 0) {
    // untrained baseline: the zero-initialized output layer makes the EMA
    // control vanish identically
    report.marginal_w2.push_back(
        eval_marginal_w2(ema_swap(v, v_state), dataset, cfg, ref));
  }

  for (int n = iter_begin; n < iter_end; ++n) {
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    TrainReport::PhaseClock clock;
    try {
      auto tic = std::chrono::steady_clock::now();
      const double bwd_loss = run_fit_phase(u, u_state, couplings, grid, ref, cfg, un,
                                            kPhaseFitBackward, Direction::backward);
      clock.fit_backward = seconds_since(tic);

      tic = std::chrono::steady_clock::now();
      couplings = refresh(control_field(u), Direction::backward, un, kPhaseRefreshBackward);
      clock.refresh_backward = seconds_since(tic);

      tic = std::chrono::steady_clock::now();
      const double fwd_loss = run_fit_phase(v, v_state, couplings, grid, ref, cfg, un,
                                            kPhaseFitForward, Direction::forward);
      clock.fit_forward = seconds_since(tic);

      tic = std::chrono::steady_clock::now();
      couplings = refresh(control_field(v), Direction::forward, un, kPhaseRefreshForward);
      clock.refresh_forward = seconds_since(tic);

      report.backward_loss.push_back(bwd_loss);
      report.forward_loss.push_back(fwd_loss);

      tic = std::chrono::steady_clock::now();
      if (cfg.eval_every > 0 && ((n + 1) % cfg.eval_every == 0 || n + 1 == iter_end)) {
        report.marginal_w2.push_back(
            eval_marginal_w2(ema_swap(v, v_state), dataset, cfg, ref));
      }
      clock.eval = seconds_since(tic);
      report.wall_clock.push_back(clock);
    } catch (const std::runtime_error& e) {
      report.wall_clock.push_back(clock);
      throw TrainingDiverged(e.what(), report);
    }
  }
}

TrainResult run_impl(const MarginalDataset& dataset_full, const MsbmConfig& cfg) {
  cfg.validate();
  const MarginalDataset dataset =
      dataset_full.has_holdout() ? dataset_full.training_view() : dataset_full;
  const TimeGrid& grid = dataset.grid();

  ControlArch arch{dataset.dim(), cfg.time_embed, cfg.hidden, cfg.blocks};
  TrainResult result{
      ControlFunction(arch, ControlRole::forward, stream_key(cfg.seed, kTagInitForward)),
      ControlFunction(arch, ControlRole::backward, stream_key(cfg.seed, kTagInitBackward)),
      TrainerState{},
      TrainerState{},
      {},
      TrainReport{}};
  result.forward_state = TrainerState(result.forward_ctrl, cfg.learning_rate, cfg.ema_decay);
  result.backward_state = TrainerState(result.backward_ctrl, cfg.learning_rate, cfg.ema_decay);
  result.final_couplings = init_couplings(dataset, cfg.seed);

  result.report.mode = cfg.mode == MsbmConfig::Mode::msbm ? "msbm" : "naive";
  result.report.config = cfg.to_json();
  for (int i = 1; i < grid.num_times(); ++i) result.report.eval_times.push_back(grid.time(i));

  msbm_loop(dataset, cfg, result.forward_ctrl, result.backward_ctrl, result.forward_state,
            result.backward_state, result.final_couplings, result.report, 0,
            cfg.outer_iterations);
  return result;
}

}  // namespace

TrainResult run_msbm(const MarginalDataset& dataset, const MsbmConfig& cfg) {
  if (cfg.mode != MsbmConfig::Mode::msbm) {
    throw std::invalid_argument("run_msbm: config mode must be msbm");
  }
  return run_impl(dataset, cfg);
}

TrainResult run_naive_baseline(const MarginalDataset& dataset, const MsbmConfig& cfg) {
  if (cfg.mode != MsbmConfig::Mode::naive) {
    throw std::invalid_argument("run_naive_baseline: config mode must be naive");
  }
  return run_impl(dataset, cfg);
}

TrainResult run_bridge_matching(const MarginalDataset& dataset, const MsbmConfig& cfg) {
  const MarginalDataset view = dataset.has_holdout() ? dataset.training_view() : dataset;
  if (view.grid().num_times() != 2) {
    throw std::invalid_argument("run_bridge_matching: dataset must have exactly two marginals");
  }
  return run_impl(dataset, cfg);
}

void continue_msbm(TrainResult& result, const MarginalDataset& dataset_full, const MsbmConfig& cfg,
                   int extra_iterations) {
  if (extra_iterations < 1) {
    throw std::invalid_argument("continue_msbm: extra_iterations must be >= 1");
  }
  const MarginalDataset dataset =
      dataset_full.has_holdout() ? dataset_full.training_view() : dataset_full;
  const int done = static_cast<int>(result.report.forward_loss.size());
  msbm_loop(dataset, cfg, result.forward_ctrl, result.backward_ctrl, result.forward_state,
            result.backward_state, result.final_couplings, result.report, done,
            done + extra_iterations);
}

}  // namespace msbm
