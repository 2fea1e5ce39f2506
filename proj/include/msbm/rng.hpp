#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace msbm {

// splitmix64 finalizer; good avalanche, cheap enough to key streams on the fly.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Folds an arbitrary tag tuple into one stream key. Streams keyed on distinct
// tag tuples are treated as independent.
constexpr std::uint64_t stream_key(std::uint64_t seed) { return mix64(seed); }

template <class... Rest>
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t tag, Rest... rest) {
  return stream_key(mix64(seed ^ mix64(tag)), rest...);
}

// A single random stream. All randomness in the library flows through
// explicitly passed Rng instances so callers control determinism.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : eng_(key) {}

  template <class... Tags>
  static Rng keyed(std::uint64_t seed, Tags... tags) {
    return Rng(stream_key(seed, static_cast<std::uint64_t>(tags)...));
  }

  double uniform() { return unif_(eng_); }
  double uniform(double a, double b) { return a + (b - a) * unif_(eng_); }
  double normal() { return norm_(eng_); }

  // uniform integer in [0, n)
  std::int64_t integer(std::int64_t n) {
    return std::uniform_int_distribution<std::int64_t>(0, n - 1)(eng_);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Eigen::MatrixXd normal_matrix(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = normal();
    return m;
  }

  // Fisher-Yates permutation of {0,...,n-1}.
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(integer(i + 1));
      std::swap(p[i], p[j]);
    }
    return p;
  }

  // m distinct indices drawn uniformly from {0,...,n-1}, in random order.
  std::vector<int> sample_without_replacement(int n, int m) {
    std::vector<int> p = permutation(n);
    p.resize(m);
    return p;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> norm_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace msbm
