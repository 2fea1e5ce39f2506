#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "msbm/time_grid.hpp"

#include <json.hpp>

namespace msbm {

struct SyntheticSpec {
  enum class Kind { petal, gaussian_chain, custom_mixture } kind = Kind::petal;
  int n = 512;          // samples per snapshot
  double noise = 0.1;   // additive Gaussian scale (truncated at 3 standard deviations)
  std::uint64_t seed = 0;
  std::vector<double> times;  // defaults per kind when empty

  // petal
  int petals = 5;
  double radius = 3.0;
  double jitter = 0.1;       // angular jitter (radians)
  bool merge_final = false;  // radius returns to the origin at t_k

  // gaussian_chain: per-time means on coordinate 0; defaults to the zig-zag
  // 0, +amplitude, -amplitude, 0, ... when empty
  std::vector<double> means;
  double amplitude = 2.0;

  // custom_mixture: means[t][component][coordinate]
  std::vector<std::vector<std::vector<double>>> mixture_means;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

MarginalDataset gen_petal(const SyntheticSpec& spec);
MarginalDataset gen_gaussian_chain(const SyntheticSpec& spec);
MarginalDataset gen_custom_mixture(const SyntheticSpec& spec);
MarginalDataset generate(const SyntheticSpec& spec);

// Snapshot directory: snapshot_<i>.csv with header x0,...,x{d-1}, plus a
// grid.json manifest listing times, file names and any held-out indices.
void save_snapshots(const std::filesystem::path& dir, const MarginalDataset& dataset,
                    const nlohmann::json& extra_manifest = nlohmann::json::object());
MarginalDataset load_snapshots(const std::filesystem::path& dir);

// Disjoint per-snapshot row split; train receives round(ratio * n_i) rows.
std::pair<MarginalDataset, MarginalDataset> split(const MarginalDataset& dataset, double ratio,
                                                  std::uint64_t seed);

}  // namespace msbm
