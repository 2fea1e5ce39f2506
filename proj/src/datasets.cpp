#include "msbm/datasets.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

#include "msbm/rng.hpp"

namespace msbm {

namespace {

// standard normal truncated at |z| <= 3, by rejection
double truncated_normal(Rng& rng) {
  double z = rng.normal();
  while (std::abs(z) > 3.0) z = rng.normal();
  return z;
}

// 2-D standard normal truncated at ||z|| <= 3
std::pair<double, double> truncated_normal2(Rng& rng) {
  double z1 = rng.normal(), z2 = rng.normal();
  while (z1 * z1 + z2 * z2 > 9.0) {
    z1 = rng.normal();
    z2 = rng.normal();
  }
  return {z1, z2};
}

std::vector<double> default_times(const SyntheticSpec& spec) {
  if (!spec.times.empty()) return spec.times;
  switch (spec.kind) {
    case SyntheticSpec::Kind::petal:
      return {0.0, 1.0, 2.0, 3.0, 4.0};
    case SyntheticSpec::Kind::gaussian_chain:
      return {0.0, 1.0, 2.0};
    case SyntheticSpec::Kind::custom_mixture:
      break;
  }
  throw std::invalid_argument("SyntheticSpec: custom_mixture requires explicit times");
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n < 1) throw std::invalid_argument("SyntheticSpec: n must be >= 1");
  if (noise < 0.0) throw std::invalid_argument("SyntheticSpec: noise must be >= 0");
  if (kind == Kind::petal && petals < 2) {
    throw std::invalid_argument("SyntheticSpec: petal count must be >= 2");
  }
  if (kind == Kind::gaussian_chain) {
    const std::size_t k1 = times.empty() ? 3 : times.size();
    if (k1 < 3) throw std::invalid_argument("SyntheticSpec: gaussian_chain needs >= 3 times");
    if (!means.empty() && means.size() != k1) {
      throw std::invalid_argument("SyntheticSpec: means must match the grid length");
    }
  }
  if (kind == Kind::custom_mixture) {
    if (times.empty() || mixture_means.size() != times.size()) {
      throw std::invalid_argument("SyntheticSpec: mixture_means must match times");
    }
  }
}

nlohmann::json SyntheticSpec::to_json() const {
  nlohmann::json j;
  switch (kind) {
    case Kind::petal: j["kind"] = "petal"; break;
    case Kind::gaussian_chain: j["kind"] = "gaussian_chain"; break;
    case Kind::custom_mixture: j["kind"] = "custom_mixture"; break;
  }
  j["n"] = n;
  j["noise"] = noise;
  j["seed"] = seed;
  j["times"] = times;
  j["petals"] = petals;
  j["radius"] = radius;
  j["jitter"] = jitter;
  j["merge_final"] = merge_final;
  j["means"] = means;
  j["amplitude"] = amplitude;
  if (!mixture_means.empty()) j["mixture_means"] = mixture_means;
  return j;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  const std::string kind = j.value("kind", "petal");
  if (kind == "petal") s.kind = Kind::petal;
  else if (kind == "gaussian_chain") s.kind = Kind::gaussian_chain;
  else if (kind == "custom_mixture") s.kind = Kind::custom_mixture;
  else throw std::invalid_argument("unknown dataset kind: " + kind);
  s.n = j.value("n", s.n);
  s.noise = j.value("noise", s.noise);
  s.seed = j.value("seed", s.seed);
  s.times = j.value("times", s.times);
  s.petals = j.value("petals", s.petals);
  s.radius = j.value("radius", s.radius);
  s.jitter = j.value("jitter", s.jitter);
  s.merge_final = j.value("merge_final", s.merge_final);
  s.means = j.value("means", s.means);
  s.amplitude = j.value("amplitude", s.amplitude);
  if (j.contains("mixture_means")) {
    s.mixture_means = j["mixture_means"].get<std::vector<std::vector<std::vector<double>>>>();
  }
  return s;
}

MarginalDataset gen_petal(const SyntheticSpec& spec) {
  spec.validate();
  const std::vector<double> times = default_times(spec);
  TimeGrid grid(times);
  const double T = grid.back() - grid.front();
  Rng rng = Rng::keyed(spec.seed, 301);

  // Per-sample lobe and angular offset are fixed across time so snapshots
  // describe one coherent population flowing outward along rose-curve lobes.
  std::vector<int> lobe(static_cast<std::size_t>(spec.n));
  std::vector<double> offset(static_cast<std::size_t>(spec.n));
  for (int s = 0; s < spec.n; ++s) {
    lobe[static_cast<std::size_t>(s)] = static_cast<int>(rng.integer(spec.petals));
    offset[static_cast<std::size_t>(s)] = spec.jitter * truncated_normal(rng);
  }

  std::vector<Eigen::MatrixXd> snaps;
  for (double t : times) {
    const double phase = (t - grid.front()) / T;
    // linear outward growth, or a petal loop returning to the origin
    const double r_sched =
        spec.merge_final ? spec.radius * std::sin(std::numbers::pi * phase) : spec.radius * phase;
    Eigen::MatrixXd snap(spec.n, 2);
    for (int s = 0; s < spec.n; ++s) {
      const double delta = offset[static_cast<std::size_t>(s)];
      const double angle =
          2.0 * std::numbers::pi * lobe[static_cast<std::size_t>(s)] / spec.petals + delta;
      // lobe cross-section narrows toward the tip like a rose curve
      const double r = r_sched * std::cos(spec.petals * delta / 2.0);
      const auto [z1, z2] = truncated_normal2(rng);
      snap(s, 0) = r * std::cos(angle) + spec.noise * z1;
      snap(s, 1) = r * std::sin(angle) + spec.noise * z2;
    }
    snaps.push_back(std::move(snap));
  }
  return MarginalDataset(std::move(grid), std::move(snaps));
}

MarginalDataset gen_gaussian_chain(const SyntheticSpec& spec) {
  spec.validate();
  const std::vector<double> times = default_times(spec);
  TimeGrid grid(times);
  std::vector<double> means = spec.means;
  if (means.empty()) {
    // zig-zag 0, +a, -a, 0, +a, ...: intermediate marginals sit off the
    // straight path between the endpoints
    const double cycle[4] = {0.0, spec.amplitude, -spec.amplitude, 0.0};
    for (std::size_t i = 0; i < times.size(); ++i) means.push_back(cycle[i % 4]);
  }
  Rng rng = Rng::keyed(spec.seed, 302);
  std::vector<Eigen::MatrixXd> snaps;
  for (std::size_t i = 0; i < times.size(); ++i) {
    Eigen::MatrixXd snap(spec.n, 1);
    for (int s = 0; s < spec.n; ++s) snap(s, 0) = means[i] + spec.noise * rng.normal();
    snaps.push_back(std::move(snap));
  }
  return MarginalDataset(std::move(grid), std::move(snaps));
}

MarginalDataset gen_custom_mixture(const SyntheticSpec& spec) {
  spec.validate();
  TimeGrid grid(spec.times);
  const std::size_t d = spec.mixture_means.front().front().size();
  Rng rng = Rng::keyed(spec.seed, 303);
  std::vector<Eigen::MatrixXd> snaps;
  for (std::size_t i = 0; i < spec.times.size(); ++i) {
    const auto& comps = spec.mixture_means[i];
    if (comps.empty()) throw std::invalid_argument("custom_mixture: empty component list");
    Eigen::MatrixXd snap(spec.n, static_cast<Eigen::Index>(d));
    for (int s = 0; s < spec.n; ++s) {
      const auto& mu = comps[static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(comps.size())))];
      if (mu.size() != d) throw std::invalid_argument("custom_mixture: ragged component means");
      for (std::size_t c = 0; c < d; ++c) {
        snap(s, static_cast<Eigen::Index>(c)) = mu[c] + spec.noise * rng.normal();
      }
    }
    snaps.push_back(std::move(snap));
  }
  return MarginalDataset(std::move(grid), std::move(snaps));
}

MarginalDataset generate(const SyntheticSpec& spec) {
  switch (spec.kind) {
    case SyntheticSpec::Kind::petal:
      return gen_petal(spec);
    case SyntheticSpec::Kind::gaussian_chain:
      return gen_gaussian_chain(spec);
    case SyntheticSpec::Kind::custom_mixture:
      return gen_custom_mixture(spec);
  }
  throw std::invalid_argument("generate: unknown kind");
}

void save_snapshots(const std::filesystem::path& dir, const MarginalDataset& dataset,
                    const nlohmann::json& extra_manifest) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = extra_manifest;
  manifest["times"] = dataset.grid().times();
  std::vector<std::string> files;
  char buf[32];
  for (int i = 0; i < dataset.num_snapshots(); ++i) {
    const std::string name = "snapshot_" + std::to_string(i) + ".csv";
    files.push_back(name);
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    const Eigen::MatrixXd& m = dataset.samples_at(i);
    for (int c = 0; c < m.cols(); ++c) out << (c ? ",x" : "x") << c;
    out << "\n";
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
        out << (c ? "," : "") << buf;
      }
      out << "\n";
    }
  }
  manifest["files"] = files;
  const std::vector<int> held = dataset.held_out_indices();
  if (!held.empty()) manifest["holdout"] = held;
  std::ofstream mf(dir / "grid.json");
  if (!mf) throw std::runtime_error("cannot write " + (dir / "grid.json").string());
  mf << manifest.dump(2) << "\n";
}

namespace {

Eigen::MatrixXd load_snapshot_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("missing snapshot file: " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty snapshot file: " + file.string());
  int dim = 1;
  for (char c : line) {
    if (c == ',') ++dim;
  }
  std::vector<double> values;
  int rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(file.string() + ":" + std::to_string(line_no) +
                                 ": cannot parse value '" + cell + "'");
      }
      if (!std::isfinite(v)) {
        throw std::runtime_error(file.string() + ":" + std::to_string(line_no) +
                                 ": non-finite value");
      }
      values.push_back(v);
      ++cols;
    }
    if (cols != dim) {
      throw std::runtime_error(file.string() + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(dim) + " columns, got " +
                               std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("snapshot has no rows: " + file.string());
  Eigen::MatrixXd m(rows, dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) {
      m(r, c) = values[static_cast<std::size_t>(r) * static_cast<std::size_t>(dim) +
                       static_cast<std::size_t>(c)];
    }
  }
  return m;
}

}  // namespace

MarginalDataset load_snapshots(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / "grid.json";
  std::ifstream mf(manifest_path);
  if (!mf) throw std::runtime_error("missing manifest: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    throw std::runtime_error("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("times") || !manifest.contains("files")) {
    throw std::runtime_error("manifest must list 'times' and 'files': " + manifest_path.string());
  }
  const auto times = manifest["times"].get<std::vector<double>>();
  const auto files = manifest["files"].get<std::vector<std::string>>();
  if (times.size() != files.size()) {
    throw std::runtime_error("manifest times/files length mismatch: " + manifest_path.string());
  }
  std::vector<Eigen::MatrixXd> snaps;
  for (const std::string& f : files) snaps.push_back(load_snapshot_csv(dir / f));
  MarginalDataset ds(TimeGrid(times), std::move(snaps));
  if (manifest.contains("holdout")) {
    for (int i : manifest["holdout"].get<std::vector<int>>()) ds.set_holdout(i, true);
  }
  return ds;
}

std::pair<MarginalDataset, MarginalDataset> split(const MarginalDataset& dataset, double ratio,
                                                  std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split: ratio must be in (0, 1)");
  std::vector<Eigen::MatrixXd> train, test;
  for (int i = 0; i < dataset.num_snapshots(); ++i) {
    const Eigen::MatrixXd& m = dataset.samples_at(i);
    const int n = static_cast<int>(m.rows());
    const int n_train = static_cast<int>(std::llround(ratio * n));
    if (n_train < 1 || n_train >= n) {
      throw std::invalid_argument("split: snapshot " + std::to_string(i) +
                                  " too small to split at this ratio");
    }
    Rng rng = Rng::keyed(seed, 401, static_cast<std::uint64_t>(i));
    const std::vector<int> perm = rng.permutation(n);
    Eigen::MatrixXd tr(n_train, m.cols()), te(n - n_train, m.cols());
    for (int r = 0; r < n_train; ++r) tr.row(r) = m.row(perm[static_cast<std::size_t>(r)]);
    for (int r = n_train; r < n; ++r) te.row(r - n_train) = m.row(perm[static_cast<std::size_t>(r)]);
    train.push_back(std::move(tr));
    test.push_back(std::move(te));
  }
  return {MarginalDataset(dataset.grid(), std::move(train)),
          MarginalDataset(dataset.grid(), std::move(test))};
}

}  // namespace msbm
