#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "msbm/datasets.hpp"
#include "msbm/sde_sim.hpp"
#include "oracles.hpp"

using namespace msbm;

TEST_CASE("degenerate dynamics: zero control, zero drift, vanishing noise") {
  // sigma must stay positive; 1e-12 over unit time contributes ~1e-12 motion
  const ReferenceProcess ref = ReferenceProcess::brownian(1e-12);
  SimConfig cfg;
  cfg.steps_per_interval = 17;
  Eigen::MatrixXd x0 = Eigen::MatrixXd::Constant(4, 2, 1.5);
  TrajectoryBatch traj = simulate_forward(zero_control(), x0, 0.0, 1.0, cfg, ref);
  CHECK(traj.num_times() == 18);
  CHECK((traj.states.back() - x0).lpNorm<Eigen::Infinity>() < 1e-9);

  TrajectoryBatch back = simulate_backward(zero_control(), x0, 1.0, 0.0, cfg, ref);
  CHECK(back.times.front() == 1.0);
  CHECK(back.times.back() == 0.0);
  CHECK((back.states.back() - x0).lpNorm<Eigen::Infinity>() < 1e-9);

  CHECK_THROWS_AS(simulate_forward(zero_control(), x0, 1.0, 0.0, cfg, ref),
                  std::invalid_argument);
  CHECK_THROWS_AS(simulate_backward(zero_control(), x0, 0.0, 1.0, cfg, ref),
                  std::invalid_argument);
}

TEST_CASE("Brownian terminal variance matches sigma^2 T") {
  const ReferenceProcess ref = ReferenceProcess::brownian(1.0);
  SimConfig cfg;
  cfg.steps_per_interval = 10;
  cfg.seed = 7;
  cfg.record_times = {1.0};  // endpoints only
  const int n = 100000;
  TrajectoryBatch traj =
      simulate_forward(zero_control(), Eigen::MatrixXd::Zero(n, 1), 0.0, 1.0, cfg, ref);
  std::vector<double> terminal(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) terminal[static_cast<std::size_t>(i)] = traj.states.back()(i, 0);
  CHECK(std::abs(oracle::mean(terminal)) < 0.02);
  CHECK(oracle::variance(terminal) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("bridge-pull control reaches its anchor in the small-noise limit") {
  const double c = 2.0, T = 1.0;
  const ReferenceProcess ref = ReferenceProcess::brownian(1e-6);
  // sigma * ctrl must equal (c - x)/(T - t), so the field divides by sigma
  ControlField pull = [&](double t, const Eigen::MatrixXd& X) {
    return ((c - X.array()) / ((T - t) * 1e-6)).matrix();
  };
  SimConfig cfg;
  cfg.steps_per_interval = 4000;
  TrajectoryBatch traj = simulate_forward(pull, Eigen::MatrixXd::Zero(8, 1), 0.0, T, cfg, ref);
  CHECK((traj.states.back().array() - c).abs().maxCoeff() < 1e-2);
}

TEST_CASE("backward anchor control reaches its target down the clock") {
  const double a = -1.5;
  const ReferenceProcess ref = ReferenceProcess::brownian(1e-6);
  ControlField anchor = [&](double t, const Eigen::MatrixXd& X) {
    return ((a - X.array()) / (t * 1e-6)).matrix();
  };
  SimConfig cfg;
  cfg.steps_per_interval = 4000;
  TrajectoryBatch traj =
      simulate_backward(anchor, Eigen::MatrixXd::Ones(8, 1), 1.0, 0.0, cfg, ref);
  CHECK((traj.states.back().array() - a).abs().maxCoeff() < 1e-2);
}

TEST_CASE("backward diffusion with the analytic reversal drift recovers the initial variance") {
  // forward Brownian from N(0,1) over [0,1]; the reversal control is the
  // score sigma^2 grad log p_t scaled by 1/sigma
  const double sigma = 1.0;
  const ReferenceProcess ref = ReferenceProcess::brownian(sigma);
  const int n = 100000;
  SimConfig cfg;
  cfg.steps_per_interval = 100;
  cfg.seed = 5;
  cfg.record_times = {1.0};
  Rng init(77);
  Eigen::MatrixXd x0 = init.normal_matrix(n, 1);
  TrajectoryBatch fwd = simulate_forward(zero_control(), x0, 0.0, 1.0, cfg, ref);

  ControlField reversal = [&](double t, const Eigen::MatrixXd& X) {
    return (-sigma * X.array() / (1.0 + sigma * sigma * t)).matrix();
  };
  SimConfig bcfg;
  bcfg.steps_per_interval = 100;
  bcfg.seed = 6;
  bcfg.record_times = {0.0};
  TrajectoryBatch back = simulate_backward(reversal, fwd.states.back(), 1.0, 0.0, bcfg, ref);
  std::vector<double> start(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) start[static_cast<std::size_t>(i)] = back.states.back()(i, 0);
  CHECK(oracle::variance(start) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("discretization error shrinks as steps double") {
  // zero control with an affine reference drift: the exact terminal variance
  // of dX = aX dt + dW is (e^{2aT}-1)/(2a); the Euler-Maruyama variance obeys
  // the deterministic recursion v <- (1+a dt)^2 v + dt
  const double a = 1.0, T = 1.0;
  const ReferenceProcess ref = ReferenceProcess::affine(1.0, a, 0.0);
  const double exact = (std::exp(2.0 * a * T) - 1.0) / (2.0 * a);
  auto em_variance = [&](int steps) {
    const double dt = T / steps;
    double var = 0.0;
    for (int m = 0; m < steps; ++m) var = (1.0 + a * dt) * (1.0 + a * dt) * var + dt;
    return var;
  };
  double prev_err = std::numeric_limits<double>::infinity();
  for (int steps : {10, 20, 40, 80}) {
    const double err = std::abs(em_variance(steps) - exact);
    CHECK(err < prev_err);
    prev_err = err;
  }
  // and the simulator realizes the recursion: empirical variance at 20 steps
  SimConfig cfg;
  cfg.steps_per_interval = 20;
  cfg.seed = 8;
  cfg.record_times = {T};
  const int n = 200000;
  TrajectoryBatch traj = simulate_forward(zero_control(), Eigen::MatrixXd::Zero(n, 1), 0.0, T,
                                          cfg, ref);
  std::vector<double> term(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) term[static_cast<std::size_t>(i)] = traj.states.back()(i, 0);
  CHECK(oracle::variance(term) == doctest::Approx(em_variance(20)).epsilon(0.02));
}

TEST_CASE("fixed seed reproduces bit-identical trajectories") {
  const ReferenceProcess ref = ReferenceProcess::brownian(0.5);
  SimConfig cfg;
  cfg.steps_per_interval = 25;
  cfg.seed = 99;
  Eigen::MatrixXd x0 = Rng(1).normal_matrix(16, 3);
  TrajectoryBatch t1 = simulate_forward(zero_control(), x0, 0.0, 2.0, cfg, ref);
  TrajectoryBatch t2 = simulate_forward(zero_control(), x0, 0.0, 2.0, cfg, ref);
  REQUIRE(t1.num_times() == t2.num_times());
  for (int s = 0; s < t1.num_times(); ++s) {
    CHECK(t1.states[static_cast<std::size_t>(s)] == t2.states[static_cast<std::size_t>(s)]);
  }
}

TEST_CASE("full rollout glues intervals continuously") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::gaussian_chain;
  spec.n = 32;
  spec.seed = 3;
  MarginalDataset ds = gen_gaussian_chain(spec);
  const ReferenceProcess ref = ReferenceProcess::brownian(0.4);
  SimConfig cfg;
  cfg.steps_per_interval = 12;
  cfg.seed = 31;
  TrajectoryBatch roll = rollout_full(zero_control(), ds, Direction::forward, cfg, ref);
  CHECK(roll.times == ds.grid().times());
  CHECK(roll.batch() == 32);

  // chunk-wise re-simulation with the rollout's per-interval sub-streams
  // reproduces every grid slice exactly: no re-anchoring happens at interior
  // grid times
  Eigen::MatrixXd x = ds.samples_at(0);
  for (int i = 1; i <= ds.grid().num_intervals(); ++i) {
    SimConfig local = cfg;
    local.seed = stream_key(cfg.seed, 101, static_cast<std::uint64_t>(i));
    local.record_times = {ds.grid().time(i)};
    TrajectoryBatch part = simulate_forward(zero_control(), x, ds.grid().time(i - 1),
                                            ds.grid().time(i), local, ref);
    x = part.states.back();
    CHECK(x == roll.at_time(ds.grid().time(i)));
  }

  TrajectoryBatch back = rollout_full(zero_control(), ds, Direction::backward, cfg, ref);
  CHECK(back.times.front() == ds.grid().back());
  CHECK(back.times.back() == ds.grid().front());

  // requested interior record times appear in the glued rollout
  SimConfig with_extra = cfg;
  with_extra.record_times = {0.25, 1.5};
  TrajectoryBatch extra = rollout_full(zero_control(), ds, Direction::forward, with_extra, ref);
  CHECK(extra.index_of_time(0.25) >= 0);
  CHECK(extra.index_of_time(1.5) >= 0);
  CHECK(extra.at_time(2.0).rows() == 32);
}

TEST_CASE("trajectory CSV export") {
  namespace fs = std::filesystem;
  TrajectoryBatch traj;
  traj.times = {0.0, 0.5};
  traj.states = {Eigen::MatrixXd::Constant(2, 2, 1.25), Eigen::MatrixXd::Constant(2, 2, -0.5)};
  const fs::path file = fs::temp_directory_path() / "msbm_traj_test.csv";
  write_trajectory_csv(file, traj, {"test export"});
  std::ifstream in(file);
  std::string line;
  std::getline(in, line);
  CHECK(line == "# test export");
  std::getline(in, line);
  CHECK(line == "path_id,t,x0,x1");
  std::getline(in, line);
  CHECK(line == "0,0,1.25,1.25");
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);  // 2 paths x 2 times
  fs::remove(file);
}
