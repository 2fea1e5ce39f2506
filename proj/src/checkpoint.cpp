#include "msbm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace msbm {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'B', 'M', 'C', 'K', 'P', '1'};

void put_u64(std::ostream& out, std::uint64_t x) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_u32(std::ostream& out, std::uint32_t x) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_f64(std::ostream& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

void put_vec(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v[i]);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return x;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return x;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

Eigen::VectorXd get_vec(std::istream& in, std::uint64_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = get_f64(in);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const ControlFunction& ctrl,
                     const TrainerState& state) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + file.string() + " for writing");
  out.write(kMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(ctrl.role()));
  put_u32(out, static_cast<std::uint32_t>(ctrl.arch().dim));
  put_u32(out, static_cast<std::uint32_t>(ctrl.arch().time_embed));
  put_u32(out, static_cast<std::uint32_t>(ctrl.arch().hidden));
  put_u32(out, static_cast<std::uint32_t>(ctrl.arch().blocks));
  put_u64(out, static_cast<std::uint64_t>(state.step));
  put_f64(out, state.learning_rate);
  put_f64(out, state.beta1);
  put_f64(out, state.beta2);
  put_f64(out, state.epsilon);
  put_f64(out, state.ema_decay);
  put_u64(out, static_cast<std::uint64_t>(ctrl.param_count()));
  put_vec(out, ctrl.params());
  put_vec(out, state.m);
  put_vec(out, state.v);
  put_vec(out, state.ema);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + file.string());
}

std::pair<ControlFunction, TrainerState> load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + file.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + file.string());
  }
  const auto role = static_cast<ControlRole>(get_u32(in));
  ControlArch arch;
  arch.dim = static_cast<int>(get_u32(in));
  arch.time_embed = static_cast<int>(get_u32(in));
  arch.hidden = static_cast<int>(get_u32(in));
  arch.blocks = static_cast<int>(get_u32(in));
  const auto step = static_cast<std::int64_t>(get_u64(in));
  const double lr = get_f64(in);
  const double beta1 = get_f64(in);
  const double beta2 = get_f64(in);
  const double eps = get_f64(in);
  const double decay = get_f64(in);
  const std::uint64_t n = get_u64(in);

  ControlFunction ctrl(arch, role, 0);
  if (static_cast<std::uint64_t>(ctrl.param_count()) != n) {
    throw std::runtime_error("checkpoint: parameter count does not match architecture");
  }
  ctrl.params() = get_vec(in, n);
  TrainerState state(ctrl, lr, decay);
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.epsilon = eps;
  state.step = step;
  state.m = get_vec(in, n);
  state.v = get_vec(in, n);
  state.ema = get_vec(in, n);
  return {std::move(ctrl), std::move(state)};
}

}  // namespace msbm
