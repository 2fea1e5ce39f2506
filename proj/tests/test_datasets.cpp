#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "msbm/datasets.hpp"
#include "oracles.hpp"

using namespace msbm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("petal generator geometry") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::petal;
  spec.n = 400;
  spec.noise = 0.1;
  spec.seed = 21;
  MarginalDataset ds = gen_petal(spec);
  CHECK(ds.num_snapshots() == 5);
  CHECK(ds.dim() == 2);
  CHECK(ds.grid().times() == std::vector<double>{0.0, 1.0, 2.0, 3.0, 4.0});

  // t_0: every point within 3*noise of the origin
  const Eigen::MatrixXd& first = ds.samples_at(0);
  for (int i = 0; i < first.rows(); ++i) CHECK(first.row(i).norm() <= 3.0 * spec.noise + 1e-12);

  // t_k: five angular clusters recovered with high purity
  const Eigen::MatrixXd& last = ds.samples_at(4);
  Eigen::MatrixXd circle(last.rows(), 2);
  std::vector<int> truth(static_cast<std::size_t>(last.rows()));
  for (int i = 0; i < last.rows(); ++i) {
    const double theta = std::atan2(last(i, 1), last(i, 0));
    circle(i, 0) = std::cos(theta);
    circle(i, 1) = std::sin(theta);
    // nearest lobe center is ground truth for purity accounting
    int best = 0;
    double bd = 1e18;
    for (int l = 0; l < 5; ++l) {
      const double c = 2.0 * M_PI * l / 5.0;
      const double d = std::abs(std::remainder(theta - c, 2.0 * M_PI));
      if (d < bd) {
        bd = d;
        best = l;
      }
    }
    truth[static_cast<std::size_t>(i)] = best;
  }
  const std::vector<int> label = oracle::kmeans(circle, 5, 50, 7);
  std::map<int, std::map<int, int>> table;
  for (int i = 0; i < last.rows(); ++i) {
    table[label[static_cast<std::size_t>(i)]][truth[static_cast<std::size_t>(i)]]++;
  }
  int majority = 0;
  for (const auto& [cluster, votes] : table) {
    int best = 0;
    for (const auto& [lobe, count] : votes) best = std::max(best, count);
    majority += best;
  }
  CHECK(static_cast<double>(majority) / last.rows() >= 0.90);

  // doubling n doubles rows and keeps the final-time mean stable
  SyntheticSpec doubled = spec;
  doubled.n = 800;
  MarginalDataset big = gen_petal(doubled);
  CHECK(big.samples_at(0).rows() == 800);
  CHECK((big.samples_at(4).colwise().mean() - last.colwise().mean()).norm() <
        6.0 * spec.radius / std::sqrt(400.0));

  SyntheticSpec bad = spec;
  bad.petals = 1;
  CHECK_THROWS_AS(gen_petal(bad), std::invalid_argument);
}

TEST_CASE("petal merge_final returns all lobes to the origin") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::petal;
  spec.n = 100;
  spec.noise = 0.05;
  spec.seed = 2;
  spec.merge_final = true;
  MarginalDataset ds = gen_petal(spec);
  const Eigen::MatrixXd& last = ds.samples_at(4);
  for (int i = 0; i < last.rows(); ++i) CHECK(last.row(i).norm() <= 3.0 * spec.noise + 1e-9);
  // interior snapshots still fan out
  CHECK(ds.samples_at(2).rowwise().norm().mean() > 1.0);
}

TEST_CASE("gaussian chain snapshots sit on the zig-zag means") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::gaussian_chain;
  spec.n = 4000;
  spec.noise = 0.2;
  spec.seed = 23;
  spec.times = {0.0, 1.0, 2.0};
  spec.amplitude = 2.0;
  MarginalDataset ds = gen_gaussian_chain(spec);
  const double se = 3.0 * spec.noise / std::sqrt(static_cast<double>(spec.n));
  CHECK(std::abs(ds.samples_at(0).col(0).mean() - 0.0) < se);
  CHECK(std::abs(ds.samples_at(1).col(0).mean() - 2.0) < se);
  CHECK(std::abs(ds.samples_at(2).col(0).mean() + 2.0) < se);

  SUBCASE("zero noise gives point masses") {
    SyntheticSpec pm = spec;
    pm.n = 10;
    pm.noise = 0.0;
    MarginalDataset points = gen_gaussian_chain(pm);
    CHECK((points.samples_at(1).array() - 2.0).abs().maxCoeff() == 0.0);
  }

  SUBCASE("explicit means override the zig-zag") {
    SyntheticSpec custom = spec;
    custom.n = 50;
    custom.means = {1.0, -1.0, 5.0};
    MarginalDataset m = gen_gaussian_chain(custom);
    CHECK(std::abs(m.samples_at(2).col(0).mean() - 5.0) < 0.1);
    custom.means = {1.0, -1.0};
    CHECK_THROWS_AS(gen_gaussian_chain(custom), std::invalid_argument);
  }

  SUBCASE("needs at least three times") {
    SyntheticSpec two = spec;
    two.times = {0.0, 1.0};
    CHECK_THROWS_AS(gen_gaussian_chain(two), std::invalid_argument);
  }
}

TEST_CASE("custom mixture generator") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::custom_mixture;
  spec.n = 2000;
  spec.noise = 0.05;
  spec.seed = 29;
  spec.times = {0.0, 1.0};
  spec.mixture_means = {{{0.0, 0.0}}, {{-1.0, 0.0}, {1.0, 0.0}}};
  MarginalDataset ds = gen_custom_mixture(spec);
  CHECK(ds.dim() == 2);
  // roughly half the mass lands in each terminal mode
  int left = 0;
  for (int i = 0; i < ds.samples_at(1).rows(); ++i) {
    if (ds.samples_at(1)(i, 0) < 0.0) ++left;
  }
  CHECK(left > 800);
  CHECK(left < 1200);
}

TEST_CASE("snapshot directory round trip") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::petal;
  spec.n = 60;
  spec.seed = 31;
  MarginalDataset ds = gen_petal(spec);
  ds.set_holdout(2, true);

  const fs::path dir = temp_dir("msbm_ds_roundtrip");
  save_snapshots(dir, ds, {{"generator", spec.to_json()}});
  MarginalDataset loaded = load_snapshots(dir);
  CHECK(loaded == ds);
  CHECK(loaded.is_held_out(2));

  // regeneration is byte-identical
  const fs::path dir2 = temp_dir("msbm_ds_roundtrip2");
  save_snapshots(dir2, gen_petal(spec), {{"generator", spec.to_json()}});
  for (int i = 0; i < 5; ++i) {
    const std::string name = "snapshot_" + std::to_string(i) + ".csv";
    CHECK(slurp(dir / name) == slurp(dir2 / name));
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("six-snapshot manifest loads six snapshots") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::gaussian_chain;
  spec.n = 8;
  spec.seed = 37;
  spec.times = {0.0, 12.0, 24.0, 36.0, 72.0, 96.0};  // hours
  MarginalDataset ds = gen_gaussian_chain(spec);
  const fs::path dir = temp_dir("msbm_ds_six");
  save_snapshots(dir, ds);
  MarginalDataset loaded = load_snapshots(dir);
  CHECK(loaded.num_snapshots() == 6);
  CHECK(loaded.grid().back() == 96.0);
  fs::remove_all(dir);
}

TEST_CASE("loader rejects malformed inputs with locations") {
  const fs::path dir = temp_dir("msbm_ds_bad");
  CHECK_THROWS_WITH_AS(load_snapshots(dir), doctest::Contains("grid.json"), std::runtime_error);

  std::ofstream(dir / "grid.json") << R"({"times": [0, 1], "files": ["a.csv", "b.csv"]})";
  std::ofstream(dir / "a.csv") << "x0,x1\n0.5,1.0\n";
  CHECK_THROWS_WITH_AS(load_snapshots(dir), doctest::Contains("b.csv"), std::runtime_error);

  std::ofstream(dir / "b.csv") << "x0,x1\n1.0,nan\n";
  CHECK_THROWS_WITH_AS(load_snapshots(dir), doctest::Contains(":2"), std::runtime_error);

  std::ofstream(dir / "b.csv", std::ios::trunc) << "x0,x1\n1.0,2.0\n3.0\n";
  CHECK_THROWS_WITH_AS(load_snapshots(dir), doctest::Contains("columns"), std::runtime_error);

  std::ofstream(dir / "b.csv", std::ios::trunc) << "x0,x1\n1.0,2.0\n";
  CHECK_NOTHROW(load_snapshots(dir));
  fs::remove_all(dir);
}

TEST_CASE("split is disjoint, exact and seed-dependent") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::gaussian_chain;
  spec.n = 100;
  spec.seed = 41;
  MarginalDataset ds = gen_gaussian_chain(spec);
  auto [train, test] = split(ds, 0.85, 1);
  CHECK(train.samples_at(0).rows() == 85);
  CHECK(test.samples_at(0).rows() == 15);

  // union preserves the original multiset of rows
  for (int s = 0; s < ds.num_snapshots(); ++s) {
    std::multiset<double> original, recombined;
    for (int r = 0; r < ds.samples_at(s).rows(); ++r) original.insert(ds.samples_at(s)(r, 0));
    for (int r = 0; r < train.samples_at(s).rows(); ++r) {
      recombined.insert(train.samples_at(s)(r, 0));
    }
    for (int r = 0; r < test.samples_at(s).rows(); ++r) recombined.insert(test.samples_at(s)(r, 0));
    CHECK(original == recombined);
  }

  auto [train2, test2] = split(ds, 0.85, 2);
  CHECK(train2.samples_at(0).rows() == 85);
  CHECK_FALSE(train2.samples_at(0) == train.samples_at(0));

  SyntheticSpec tiny = spec;
  tiny.n = 3;
  CHECK_THROWS_AS(split(gen_gaussian_chain(tiny), 0.95, 1), std::invalid_argument);
  CHECK_THROWS_AS(split(ds, 1.0, 1), std::invalid_argument);
}
