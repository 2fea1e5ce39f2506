// Experiment runner: generate data, train controls, simulate trajectories,
// evaluate protocols and compare trained models. Configuration comes from a
// JSON document; command-line flags override config keys.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "msbm/checkpoint.hpp"
#include "msbm/datasets.hpp"
#include "msbm/metrics.hpp"
#include "msbm/msbm_train.hpp"
#include "msbm/sde_sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json cfg;
  in >> cfg;
  return cfg;
}

void write_json(const fs::path& file, const json& j) {
  fs::create_directories(file.parent_path().empty() ? "." : file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

json with_provenance(json payload, const json& resolved_config) {
  payload["build"] = MSBM_BUILD_ID;
  payload["config"] = resolved_config;
  return payload;
}

msbm::SimConfig sim_config_from(const json& cfg) {
  msbm::SimConfig sim;
  if (cfg.contains("sim")) {
    const json& s = cfg["sim"];
    sim.steps_per_interval = s.value("steps_per_interval", sim.steps_per_interval);
    sim.seed = s.value("seed", sim.seed);
    sim.record_times = s.value("record_times", sim.record_times);
  }
  return sim;
}

msbm::MetricConfig metric_config_from(const json& cfg) {
  return cfg.contains("metrics") ? msbm::MetricConfig::from_json(cfg["metrics"])
                                 : msbm::MetricConfig{};
}

msbm::MarginalDataset load_dataset(const json& cfg, const std::string& data_flag) {
  std::string path = data_flag;
  if (path.empty() && cfg.contains("dataset_path")) path = cfg["dataset_path"].get<std::string>();
  if (path.empty()) throw std::runtime_error("no dataset: pass --data DIR or set dataset_path");
  if (!fs::exists(fs::path(path) / "grid.json")) {
    throw std::runtime_error("dataset not found at " + path + " (missing grid.json)");
  }
  msbm::MarginalDataset ds = msbm::load_snapshots(path);
  if (cfg.contains("holdout")) {
    for (int i : cfg["holdout"].get<std::vector<int>>()) ds.set_holdout(i, true);
  }
  return ds;
}

std::vector<std::uint64_t> eval_seeds(const json& cfg) {
  if (cfg.contains("seeds")) return cfg["seeds"].get<std::vector<std::uint64_t>>();
  return {0};
}

double vec_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double vec_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = vec_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<int> threads;
};

std::string resolve_out(const json& cfg, const std::string& flag, const char* fallback) {
  if (!flag.empty()) return flag;
  if (cfg.contains("out")) return cfg["out"].get<std::string>();
  return fallback;
}

int cmd_generate(const CommonFlags& flags) {
  json cfg = load_config(flags.config_path);
  if (!cfg.contains("dataset")) throw std::runtime_error("generate: config needs a 'dataset' spec");
  msbm::SyntheticSpec spec = msbm::SyntheticSpec::from_json(cfg["dataset"]);
  if (flags.seed) spec.seed = *flags.seed;
  spec.validate();
  msbm::MarginalDataset ds = msbm::generate(spec);
  if (cfg.contains("holdout")) {
    for (int i : cfg["holdout"].get<std::vector<int>>()) ds.set_holdout(i, true);
  }
  const std::string out = resolve_out(cfg, flags.out_dir, "dataset");
  json manifest;
  manifest["generator"] = spec.to_json();
  manifest["build"] = MSBM_BUILD_ID;
  msbm::save_snapshots(out, ds, manifest);
  std::cout << "wrote " << ds.num_snapshots() << " snapshots (d=" << ds.dim() << ", n="
            << ds.samples_at(0).rows() << ") to " << out << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  json cfg = load_config(flags.config_path);
  msbm::MsbmConfig train = cfg.contains("train") ? msbm::MsbmConfig::from_json(cfg["train"])
                                                 : msbm::MsbmConfig{};
  if (flags.seed) train.seed = *flags.seed;
  if (flags.threads) train.threads = *flags.threads;
  if (flags.mode) {
    if (*flags.mode == "msbm") train.mode = msbm::MsbmConfig::Mode::msbm;
    else if (*flags.mode == "naive") train.mode = msbm::MsbmConfig::Mode::naive;
    else throw std::runtime_error("--mode must be msbm or naive");
  }
  train.validate();
  msbm::MarginalDataset ds = load_dataset(cfg, flags.data_dir);
  const std::string out = resolve_out(cfg, flags.out_dir, "run");
  fs::create_directories(out);
  const int checkpoint_every =
      cfg.contains("train") ? cfg["train"].value("checkpoint_every", 0) : 0;

  json resolved = cfg;
  resolved["train"] = train.to_json();

  try {
    msbm::TrainResult result = [&] {
      if (checkpoint_every <= 0) {
        return train.mode == msbm::MsbmConfig::Mode::msbm ? msbm::run_msbm(ds, train)
                                                          : msbm::run_naive_baseline(ds, train);
      }
      // chunked run with one checkpoint pair per boundary
      msbm::MsbmConfig chunk_cfg = train;
      chunk_cfg.outer_iterations = std::min(checkpoint_every, train.outer_iterations);
      msbm::TrainResult r = chunk_cfg.mode == msbm::MsbmConfig::Mode::msbm
                                ? msbm::run_msbm(ds, chunk_cfg)
                                : msbm::run_naive_baseline(ds, chunk_cfg);
      auto save_iter = [&](int done) {
        msbm::save_checkpoint(
            fs::path(out) / ("checkpoint_forward_iter" + std::to_string(done) + ".msbm"),
            r.forward_ctrl, r.forward_state);
        msbm::save_checkpoint(
            fs::path(out) / ("checkpoint_backward_iter" + std::to_string(done) + ".msbm"),
            r.backward_ctrl, r.backward_state);
      };
      int done = chunk_cfg.outer_iterations;
      save_iter(done);
      while (done < train.outer_iterations) {
        const int extra = std::min(checkpoint_every, train.outer_iterations - done);
        msbm::continue_msbm(r, ds, train, extra);
        done += extra;
        save_iter(done);
      }
      r.report.config = train.to_json();
      return r;
    }();
    msbm::save_checkpoint(fs::path(out) / "checkpoint_forward.msbm", result.forward_ctrl,
                          result.forward_state);
    msbm::save_checkpoint(fs::path(out) / "checkpoint_backward.msbm", result.backward_ctrl,
                          result.backward_state);
    write_json(fs::path(out) / "train_report.json",
               with_provenance(result.report.to_json(), resolved));
    double total = 0.0;
    for (const auto& c : result.report.wall_clock) {
      total += c.fit_backward + c.refresh_backward + c.fit_forward + c.refresh_forward + c.eval;
    }
    std::cout << "trained " << result.report.mode << " for " << train.outer_iterations
              << " outer iterations in " << total << " s; checkpoints in " << out << "\n";
    return 0;
  } catch (const msbm::TrainingDiverged& e) {
    write_json(fs::path(out) / "train_report_partial.json",
               with_provenance(e.report.to_json(), resolved));
    std::cerr << "training diverged: " << e.what() << " (partial report saved)\n";
    return 2;
  }
}

int cmd_simulate(const CommonFlags& flags, const std::string& checkpoint, bool backward,
                 const std::string& out_file) {
  json cfg = load_config(flags.config_path);
  msbm::MarginalDataset ds = load_dataset(cfg, flags.data_dir);
  auto [ctrl, state] = msbm::load_checkpoint(checkpoint);
  if (ctrl.arch().dim != ds.dim()) {
    throw std::runtime_error("checkpoint dimension does not match dataset");
  }
  msbm::SimConfig sim = sim_config_from(cfg);
  if (flags.seed) sim.seed = *flags.seed;
  const msbm::ControlFunction ema = msbm::ema_swap(ctrl, state);
  const msbm::ReferenceProcess ref = msbm::ReferenceProcess::brownian(
      cfg.contains("train") ? cfg["train"].value("sigma", 0.5) : 0.5);
  msbm::TrajectoryBatch traj =
      msbm::rollout_full(msbm::control_field(ema), ds,
                         backward ? msbm::Direction::backward : msbm::Direction::forward, sim, ref);
  const std::string out = out_file.empty() ? "trajectory.csv" : out_file;
  msbm::write_trajectory_csv(out, traj,
                             {std::string("build=") + MSBM_BUILD_ID,
                              "checkpoint=" + checkpoint, "seed=" + std::to_string(sim.seed)});
  std::cout << "wrote " << traj.batch() << " paths x " << traj.num_times() << " times to " << out
            << "\n";
  return 0;
}

json run_protocols(const msbm::ControlFunction& ema, const msbm::MarginalDataset& ds,
                   const json& cfg, const std::vector<std::string>& protocols,
                   const std::vector<std::uint64_t>& seeds, const fs::path& out,
                   const std::string& tag, const json& resolved) {
  const msbm::ReferenceProcess ref = msbm::ReferenceProcess::brownian(
      cfg.contains("train") ? cfg["train"].value("sigma", 0.5) : 0.5);
  json summary = json::array();
  for (const std::string& name : protocols) {
    const msbm::ProtocolSpec spec = msbm::ProtocolSpec::parse(name);
    std::vector<msbm::EvalReport> reports;
    for (std::uint64_t seed : seeds) {
      msbm::SimConfig sim = sim_config_from(cfg);
      sim.seed = msbm::stream_key(seed, 11);
      msbm::MetricConfig mc = metric_config_from(cfg);
      mc.seed = msbm::stream_key(seed, 12);
      msbm::EvalReport rep = msbm::evaluate_protocol(ema, ds, spec, mc, sim, ref);
      write_json(out / ("eval_" + tag + name + "_seed" + std::to_string(seed) + ".json"),
                 with_provenance(rep.to_json(), resolved));
      reports.push_back(std::move(rep));
    }
    // per-time mean +/- std over seeds, one row per (time, metric)
    std::ofstream csv(out / ("eval_" + tag + name + ".csv"));
    csv << "# build=" << MSBM_BUILD_ID << "\n";
    csv << "protocol,time,metric,mean,std";
    for (std::size_t s = 0; s < seeds.size(); ++s) csv << ",seed" << seeds[s];
    csv << "\n";
    const char* metric_names[4] = {"swd", "mmd", "w1", "w2"};
    json proto_summary;
    proto_summary["protocol"] = name;
    for (std::size_t r = 0; r < reports.front().rows.size(); ++r) {
      for (const char* m : metric_names) {
        std::vector<double> vals;
        for (const msbm::EvalReport& rep : reports) {
          const msbm::EvalRow& row = rep.rows[r];
          vals.push_back(std::string(m) == "swd"   ? row.swd
                         : std::string(m) == "mmd" ? row.mmd
                         : std::string(m) == "w1"  ? row.w1
                                                   : row.w2);
        }
        csv << name << ',' << reports.front().rows[r].time << ',' << m << ',' << vec_mean(vals)
            << ',' << vec_std(vals);
        for (double v : vals) csv << ',' << v;
        csv << "\n";
        proto_summary[m][std::to_string(reports.front().rows[r].time)] = {
            {"mean", vec_mean(vals)}, {"std", vec_std(vals)}};
      }
    }
    // mean over evaluated time points, mirroring per-protocol summary tables
    for (const char* m : metric_names) {
      std::vector<double> means;
      for (const msbm::EvalReport& rep : reports) means.push_back(rep.mean_of(m));
      csv << name << ",mean," << m << ',' << vec_mean(means) << ',' << vec_std(means);
      for (double v : means) csv << ',' << v;
      csv << "\n";
    }
    summary.push_back(proto_summary);
  }
  return summary;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& checkpoint) {
  json cfg = load_config(flags.config_path);
  msbm::MarginalDataset ds = load_dataset(cfg, flags.data_dir);
  auto [ctrl, state] = msbm::load_checkpoint(checkpoint);
  if (ctrl.arch().dim != ds.dim()) {
    throw std::runtime_error("checkpoint dimension does not match dataset");
  }
  const msbm::ControlFunction ema = msbm::ema_swap(ctrl, state);
  std::vector<std::string> protocols =
      cfg.contains("protocols") ? cfg["protocols"].get<std::vector<std::string>>()
                                : std::vector<std::string>{"from_t0"};
  const std::string out = resolve_out(cfg, flags.out_dir, "eval");
  fs::create_directories(out);
  json resolved = cfg;
  resolved["checkpoint"] = checkpoint;
  json summary = run_protocols(ema, ds, cfg, protocols, eval_seeds(cfg), out, "", resolved);
  write_json(fs::path(out) / "eval_summary.json", with_provenance({{"summary", summary}}, resolved));
  std::cout << "evaluated " << protocols.size() << " protocol(s) over " << eval_seeds(cfg).size()
            << " seed(s); tables in " << out << "\n";
  return 0;
}

int cmd_compare(const CommonFlags& flags, const std::string& msbm_dir,
                const std::string& naive_dir) {
  json cfg = load_config(flags.config_path);
  msbm::MarginalDataset ds = load_dataset(cfg, flags.data_dir);
  const std::string out = resolve_out(cfg, flags.out_dir, "compare");
  fs::create_directories(out);

  struct Side {
    std::string label, dir;
    std::vector<msbm::EvalReport> reports;
    double runtime = 0.0;
  };
  std::vector<Side> sides{{"msbm", msbm_dir, {}, 0.0}, {"naive", naive_dir, {}, 0.0}};
  const msbm::ReferenceProcess ref = msbm::ReferenceProcess::brownian(
      cfg.contains("train") ? cfg["train"].value("sigma", 0.5) : 0.5);
  const std::vector<std::uint64_t> seeds = eval_seeds(cfg);

  for (Side& side : sides) {
    const fs::path ckpt = fs::path(side.dir) / "checkpoint_forward.msbm";
    if (!fs::exists(ckpt)) throw std::runtime_error("missing checkpoint: " + ckpt.string());
    auto [ctrl, state] = msbm::load_checkpoint(ckpt);
    const msbm::ControlFunction ema = msbm::ema_swap(ctrl, state);
    for (std::uint64_t seed : seeds) {
      msbm::SimConfig sim = sim_config_from(cfg);
      sim.seed = msbm::stream_key(seed, 11);
      msbm::MetricConfig mc = metric_config_from(cfg);
      mc.seed = msbm::stream_key(seed, 12);
      side.reports.push_back(
          msbm::evaluate_protocol(ema, ds, msbm::ProtocolSpec{}, mc, sim, ref));
    }
    const fs::path report_path = fs::path(side.dir) / "train_report.json";
    if (fs::exists(report_path)) {
      std::ifstream in(report_path);
      json rep;
      in >> rep;
      for (const json& c : rep.value("wall_clock", json::array())) {
        for (const auto& [key, val] : c.items()) side.runtime += val.get<double>();
      }
    }
    msbm::SimConfig sim = sim_config_from(cfg);
    sim.seed = msbm::stream_key(seeds.front(), 11);
    msbm::TrajectoryBatch traj =
        msbm::rollout_full(msbm::control_field(ema), ds, msbm::Direction::forward, sim, ref);
    msbm::write_trajectory_csv(fs::path(out) / ("trajectory_" + side.label + ".csv"), traj,
                               {std::string("build=") + MSBM_BUILD_ID, "model=" + side.label});
  }

  std::ofstream csv(fs::path(out) / "compare.csv");
  csv << "# build=" << MSBM_BUILD_ID << "\n";
  csv << "time,metric,msbm_mean,msbm_std,naive_mean,naive_std\n";
  const char* metric_names[4] = {"swd", "mmd", "w1", "w2"};
  json table = json::array();
  for (std::size_t r = 0; r < sides[0].reports.front().rows.size(); ++r) {
    for (const char* m : metric_names) {
      std::vector<double> a, b;
      for (const msbm::EvalReport& rep : sides[0].reports) {
        const msbm::EvalRow& row = rep.rows[r];
        a.push_back(std::string(m) == "swd"   ? row.swd
                    : std::string(m) == "mmd" ? row.mmd
                    : std::string(m) == "w1"  ? row.w1
                                              : row.w2);
      }
      for (const msbm::EvalReport& rep : sides[1].reports) {
        const msbm::EvalRow& row = rep.rows[r];
        b.push_back(std::string(m) == "swd"   ? row.swd
                    : std::string(m) == "mmd" ? row.mmd
                    : std::string(m) == "w1"  ? row.w1
                                              : row.w2);
      }
      csv << sides[0].reports.front().rows[r].time << ',' << m << ',' << vec_mean(a) << ','
          << vec_std(a) << ',' << vec_mean(b) << ',' << vec_std(b) << "\n";
      table.push_back({{"time", sides[0].reports.front().rows[r].time},
                       {"metric", m},
                       {"msbm_mean", vec_mean(a)},
                       {"msbm_std", vec_std(a)},
                       {"naive_mean", vec_mean(b)},
                       {"naive_std", vec_std(b)}});
    }
  }
  csv << "runtime_s,total," << sides[0].runtime << ",0," << sides[1].runtime << ",0\n";
  json resolved = cfg;
  resolved["msbm_dir"] = msbm_dir;
  resolved["naive_dir"] = naive_dir;
  write_json(fs::path(out) / "compare.json",
             with_provenance({{"table", table},
                              {"runtime", {{"msbm", sides[0].runtime}, {"naive", sides[1].runtime}}}},
                             resolved));
  std::cout << "comparison written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-marginal bridge matching experiment runner"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string checkpoint, out_file, msbm_dir, naive_dir;
  bool backward = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "JSON config file");
    sub->add_option("--out", flags.out_dir, "output directory");
    sub->add_option("--data", flags.data_dir, "dataset directory");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { flags.seed = s; }, "override seed");
    sub->add_option_function<int>(
        "--threads", [&](int t) { flags.threads = t; }, "worker threads");
  };

  CLI::App* generate = app.add_subcommand("generate", "write a synthetic snapshot dataset");
  add_common(generate);

  CLI::App* train = app.add_subcommand("train", "run the outer training loop");
  add_common(train);
  train->add_option_function<std::string>(
      "--mode", [&](std::string m) { flags.mode = m; }, "msbm or naive");

  CLI::App* simulate = app.add_subcommand("simulate", "roll out a trained control");
  add_common(simulate);
  simulate->add_option("--checkpoint", checkpoint, "control checkpoint")->required();
  simulate->add_flag("--backward", backward, "simulate the backward control");
  simulate->add_option("--trajectory", out_file, "output CSV file");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint under the protocols");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "forward control checkpoint")->required();

  CLI::App* compare = app.add_subcommand("compare", "side-by-side metrics for two trained runs");
  add_common(compare);
  compare->add_option("--msbm", msbm_dir, "directory of the msbm run")->required();
  compare->add_option("--naive", naive_dir, "directory of the naive run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(flags);
    if (train->parsed()) return cmd_train(flags);
    if (simulate->parsed()) return cmd_simulate(flags, checkpoint, backward, out_file);
    if (evaluate->parsed()) return cmd_evaluate(flags, checkpoint);
    if (compare->parsed()) return cmd_compare(flags, msbm_dir, naive_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
