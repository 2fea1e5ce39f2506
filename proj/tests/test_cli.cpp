#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(MSBM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct Workspace {
  fs::path dir;
  Workspace() : dir(fs::temp_directory_path() / "msbm_cli_test") {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  fs::path file(const std::string& name) const { return dir / name; }
  std::string str(const std::string& name) const { return (dir / name).string(); }
};

json base_config() {
  return json{
      {"dataset",
       {{"kind", "gaussian_chain"}, {"n", 48}, {"noise", 0.1}, {"seed", 5},
        {"times", {0.0, 1.0, 2.0}}, {"amplitude", 2.0}}},
      {"train",
       {{"mode", "msbm"}, {"outer_iterations", 1}, {"inner_steps", 15}, {"batch_size", 32},
        {"sigma", 0.3}, {"learning_rate", 1e-3}, {"steps_per_interval", 6}, {"seed", 1},
        {"hidden", 12}, {"blocks", 1}, {"time_embed", 8}}},
      {"sim", {{"steps_per_interval", 6}, {"seed", 2}}},
      {"metrics", {{"swd_projections", 16}, {"wasserstein_max_n", 64}, {"seed", 3}}},
      {"protocols", {"from_t0", "from_prev"}},
      {"seeds", {0, 1}}};
}

void write_config(const fs::path& path, const json& cfg) {
  std::ofstream out(path);
  out << cfg.dump(2);
}

}  // namespace

TEST_CASE("generate: deterministic files, invalid specs rejected") {
  Workspace ws;
  write_config(ws.file("cfg.json"), base_config());
  CHECK(run("generate --config " + ws.str("cfg.json") + " --out " + ws.str("data")) == 0);
  CHECK(fs::exists(ws.file("data/grid.json")));
  CHECK(fs::exists(ws.file("data/snapshot_0.csv")));
  CHECK(fs::exists(ws.file("data/snapshot_2.csv")));

  CHECK(run("generate --config " + ws.str("cfg.json") + " --out " + ws.str("data2")) == 0);
  for (int i = 0; i < 3; ++i) {
    const std::string name = "snapshot_" + std::to_string(i) + ".csv";
    CHECK(slurp(ws.file("data/" + name)) == slurp(ws.file("data2/" + name)));
  }

  json bad = base_config();
  bad["dataset"]["kind"] = "petal";
  bad["dataset"]["petals"] = 1;
  write_config(ws.file("bad.json"), bad);
  CHECK(run("generate --config " + ws.str("bad.json") + " --out " + ws.str("data3")) != 0);
}

TEST_CASE("train, evaluate, simulate and compare round trip") {
  Workspace ws;
  write_config(ws.file("cfg.json"), base_config());
  REQUIRE(run("generate --config " + ws.str("cfg.json") + " --out " + ws.str("data")) == 0);

  SUBCASE("missing dataset path fails") {
    CHECK(run("train --config " + ws.str("cfg.json") + " --data " + ws.str("nowhere") +
              " --out " + ws.str("run")) != 0);
  }

  SUBCASE("full pipeline") {
    REQUIRE(run("train --config " + ws.str("cfg.json") + " --data " + ws.str("data") + " --out " +
                ws.str("run")) == 0);
    CHECK(fs::exists(ws.file("run/checkpoint_forward.msbm")));
    CHECK(fs::exists(ws.file("run/checkpoint_backward.msbm")));
    REQUIRE(fs::exists(ws.file("run/train_report.json")));
    json report = json::parse(slurp(ws.file("run/train_report.json")));
    CHECK(report["mode"] == "msbm");
    CHECK(report.contains("build"));
    CHECK(report.contains("config"));
    CHECK(report["forward_loss"].size() == 1);

    // naive mode lands in a report tagged naive
    REQUIRE(run("train --config " + ws.str("cfg.json") + " --data " + ws.str("data") +
                " --mode naive --out " + ws.str("run_naive")) == 0);
    json naive_report = json::parse(slurp(ws.file("run_naive/train_report.json")));
    CHECK(naive_report["mode"] == "naive");

    REQUIRE(run("evaluate --config " + ws.str("cfg.json") + " --data " + ws.str("data") +
                " --checkpoint " + ws.str("run/checkpoint_forward.msbm") + " --out " +
                ws.str("eval")) == 0);
    CHECK(fs::exists(ws.file("eval/eval_from_t0.csv")));
    CHECK(fs::exists(ws.file("eval/eval_from_t0_seed0.json")));
    CHECK(fs::exists(ws.file("eval/eval_from_t0_seed1.json")));
    CHECK(fs::exists(ws.file("eval/eval_from_prev.csv")));
    const std::string table = slurp(ws.file("eval/eval_from_t0.csv"));
    CHECK(table.find("mean,std") != std::string::npos);
    CHECK(table.find("seed0") != std::string::npos);

    // evaluation is reproducible byte for byte
    REQUIRE(run("evaluate --config " + ws.str("cfg.json") + " --data " + ws.str("data") +
                " --checkpoint " + ws.str("run/checkpoint_forward.msbm") + " --out " +
                ws.str("eval2")) == 0);
    CHECK(slurp(ws.file("eval/eval_from_t0_seed0.json")) ==
          slurp(ws.file("eval2/eval_from_t0_seed0.json")));
    CHECK(slurp(ws.file("eval/eval_from_t0.csv")) == slurp(ws.file("eval2/eval_from_t0.csv")));

    REQUIRE(run("simulate --config " + ws.str("cfg.json") + " --data " + ws.str("data") +
                " --checkpoint " + ws.str("run/checkpoint_forward.msbm") + " --trajectory " +
                ws.str("traj.csv")) == 0);
    const std::string traj = slurp(ws.file("traj.csv"));
    CHECK(traj.find("path_id,t,x0") != std::string::npos);

    REQUIRE(run("compare --config " + ws.str("cfg.json") + " --data " + ws.str("data") +
                " --msbm " + ws.str("run") + " --naive " + ws.str("run_naive") + " --out " +
                ws.str("cmp")) == 0);
    CHECK(fs::exists(ws.file("cmp/compare.csv")));
    CHECK(fs::exists(ws.file("cmp/trajectory_msbm.csv")));
    CHECK(fs::exists(ws.file("cmp/trajectory_naive.csv")));

    // identical checkpoints give identical columns
    REQUIRE(run("compare --config " + ws.str("cfg.json") + " --data " + ws.str("data") +
                " --msbm " + ws.str("run") + " --naive " + ws.str("run") + " --out " +
                ws.str("cmp_same")) == 0);
    json cmp = json::parse(slurp(ws.file("cmp_same/compare.json")));
    for (const json& row : cmp["table"]) {
      CHECK(row["msbm_mean"] == row["naive_mean"]);
      CHECK(row["msbm_std"] == row["naive_std"]);
    }

    // missing checkpoint directory fails
    CHECK(run("compare --config " + ws.str("cfg.json") + " --data " + ws.str("data") +
              " --msbm " + ws.str("run") + " --naive " + ws.str("missing") + " --out " +
              ws.str("cmp_bad")) != 0);
  }
}

TEST_CASE("periodic checkpointing writes one snapshot per boundary") {
  Workspace ws;
  json cfg = base_config();
  cfg["train"]["outer_iterations"] = 3;
  cfg["train"]["checkpoint_every"] = 2;
  write_config(ws.file("cfg.json"), cfg);
  REQUIRE(run("generate --config " + ws.str("cfg.json") + " --out " + ws.str("data")) == 0);
  REQUIRE(run("train --config " + ws.str("cfg.json") + " --data " + ws.str("data") + " --out " +
              ws.str("run")) == 0);
  CHECK(fs::exists(ws.file("run/checkpoint_forward_iter2.msbm")));
  CHECK(fs::exists(ws.file("run/checkpoint_forward_iter3.msbm")));
  CHECK(fs::exists(ws.file("run/checkpoint_forward.msbm")));
  json report = json::parse(slurp(ws.file("run/train_report.json")));
  CHECK(report["forward_loss"].size() == 3);
  CHECK(report["config"]["train"]["outer_iterations"] == 3);
}

TEST_CASE("leave-one-out holdout flows from config to training and evaluation") {
  Workspace ws;
  json cfg = base_config();
  cfg["dataset"]["times"] = {0.0, 1.0, 2.0, 3.0};
  cfg["holdout"] = {2};
  cfg["protocols"] = {"leave_one_out"};
  write_config(ws.file("cfg.json"), cfg);
  REQUIRE(run("generate --config " + ws.str("cfg.json") + " --out " + ws.str("data")) == 0);
  json manifest = json::parse(slurp(ws.file("data/grid.json")));
  CHECK(manifest["holdout"] == json::array({2}));

  REQUIRE(run("train --config " + ws.str("cfg.json") + " --data " + ws.str("data") + " --out " +
              ws.str("run")) == 0);
  REQUIRE(run("evaluate --config " + ws.str("cfg.json") + " --data " + ws.str("data") +
              " --checkpoint " + ws.str("run/checkpoint_forward.msbm") + " --out " +
              ws.str("eval")) == 0);
  json rep = json::parse(slurp(ws.file("eval/eval_leave_one_out_seed0.json")));
  REQUIRE(rep["rows"].size() == 1);
  CHECK(rep["rows"][0]["time"] == 2.0);
}
