#include "msbm/control_net.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace msbm {

namespace {

// Embedding frequencies span geometrically from slow to fast so both coarse
// horizon position and within-interval position are resolvable.
constexpr double kOmegaMin = 0.25;
constexpr double kOmegaMax = 64.0;

inline double silu(double z) { return z / (1.0 + std::exp(-z)); }

inline double silu_grad(double z) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Flat layout: W_in(H x In), b_in(H), then per block W1(H x H), b1(H),
// W2(H x H), b2(H), then W_out(d x H), b_out(d).
struct Layout {
  int in, h, d, blocks;
  int win, bin, block_stride, wout_off, total;

  explicit Layout(const ControlArch& a)
      : in(a.input_width()), h(a.hidden), d(a.dim), blocks(a.blocks) {
    win = h * in;
    bin = h;
    block_stride = 2 * h * h + 2 * h;
    wout_off = win + bin + blocks * block_stride;
    total = wout_off + d * h + d;
  }
  int block_off(int b) const { return win + bin + b * block_stride; }
};

struct Views {
  ConstMatMap w_in;
  ConstVecMap b_in;
  std::vector<ConstMatMap> w1, w2;
  std::vector<ConstVecMap> b1, b2;
  ConstMatMap w_out;
  ConstVecMap b_out;

  Views(const double* p, const Layout& L)
      : w_in(p, L.h, L.in),
        b_in(p + L.win, L.h),
        w_out(p + L.wout_off, L.d, L.h),
        b_out(p + L.wout_off + L.d * L.h, L.d) {
    for (int b = 0; b < L.blocks; ++b) {
      const double* q = p + L.block_off(b);
      w1.emplace_back(q, L.h, L.h);
      b1.emplace_back(q + L.h * L.h, L.h);
      w2.emplace_back(q + L.h * L.h + L.h, L.h, L.h);
      b2.emplace_back(q + 2 * L.h * L.h + L.h, L.h);
    }
  }
};

struct GradViews {
  MatMap w_in;
  VecMap b_in;
  std::vector<MatMap> w1, w2;
  std::vector<VecMap> b1, b2;
  MatMap w_out;
  VecMap b_out;

  GradViews(double* p, const Layout& L)
      : w_in(p, L.h, L.in),
        b_in(p + L.win, L.h),
        w_out(p + L.wout_off, L.d, L.h),
        b_out(p + L.wout_off + L.d * L.h, L.d) {
    for (int b = 0; b < L.blocks; ++b) {
      double* q = p + L.block_off(b);
      w1.emplace_back(q, L.h, L.h);
      b1.emplace_back(q + L.h * L.h, L.h);
      w2.emplace_back(q + L.h * L.h + L.h, L.h, L.h);
      b2.emplace_back(q + 2 * L.h * L.h + L.h, L.h);
    }
  }
};

struct ForwardCache {
  Eigen::MatrixXd features;            // B x In
  Eigen::MatrixXd z0, h0;              // B x H
  std::vector<Eigen::MatrixXd> z1, a1, h_out;  // per block, B x H
  Eigen::MatrixXd out;                 // B x d
};

void run_forward(const Views& v, const Layout& L, const Eigen::MatrixXd& features,
                 ForwardCache* cache, Eigen::MatrixXd& out) {
  Eigen::MatrixXd z0 = features * v.w_in.transpose();
  z0.rowwise() += v.b_in.transpose();
  Eigen::MatrixXd h = z0.unaryExpr([](double z) { return silu(z); });
  if (cache) {
    cache->features = features;
    cache->z0 = z0;
    cache->h0 = h;
  }
  for (int b = 0; b < L.blocks; ++b) {
    Eigen::MatrixXd z1 = h * v.w1[static_cast<std::size_t>(b)].transpose();
    z1.rowwise() += v.b1[static_cast<std::size_t>(b)].transpose();
    Eigen::MatrixXd a1 = z1.unaryExpr([](double z) { return silu(z); });
    Eigen::MatrixXd z2 = a1 * v.w2[static_cast<std::size_t>(b)].transpose();
    z2.rowwise() += v.b2[static_cast<std::size_t>(b)].transpose();
    h += z2;
    if (cache) {
      cache->z1.push_back(std::move(z1));
      cache->a1.push_back(std::move(a1));
      cache->h_out.push_back(h);
    }
  }
  out = h * v.w_out.transpose();
  out.rowwise() += v.b_out.transpose();
}

}  // namespace

int ControlArch::param_count() const {
  Layout L(*this);
  return L.total;
}

void ControlArch::validate() const {
  if (dim < 1) throw std::invalid_argument("ControlArch: dim must be >= 1");
  if (hidden < 1) throw std::invalid_argument("ControlArch: hidden must be >= 1");
  if (blocks < 0) throw std::invalid_argument("ControlArch: blocks must be >= 0");
  if (time_embed < 2 || time_embed % 2 != 0) {
    throw std::invalid_argument("ControlArch: time_embed must be even and >= 2");
  }
}

ControlFunction::ControlFunction(ControlArch arch, ControlRole role, std::uint64_t init_seed)
    : arch_(arch), role_(role) {
  arch_.validate();
  Layout L(arch_);
  params_ = Eigen::VectorXd::Zero(L.total);
  Rng rng = Rng::keyed(init_seed, static_cast<std::uint64_t>(role));
  GradViews w(params_.data(), L);
  const double in_std = std::sqrt(2.0 / L.in);
  for (int i = 0; i < L.h; ++i)
    for (int j = 0; j < L.in; ++j) w.w_in(i, j) = in_std * rng.normal();
  const double h_std = std::sqrt(2.0 / L.h);
  for (int b = 0; b < L.blocks; ++b) {
    for (int i = 0; i < L.h; ++i)
      for (int j = 0; j < L.h; ++j) {
        w.w1[static_cast<std::size_t>(b)](i, j) = h_std * rng.normal();
        w.w2[static_cast<std::size_t>(b)](i, j) = h_std * rng.normal();
      }
  }
  // w_out, b_out stay zero: the untrained control vanishes identically
}

Eigen::MatrixXd ControlFunction::time_embedding(const Eigen::VectorXd& ts) const {
  const int half = arch_.time_embed / 2;
  Eigen::MatrixXd emb(ts.size(), arch_.time_embed);
  for (int j = 0; j < half; ++j) {
    const double frac = half == 1 ? 0.0 : static_cast<double>(j) / (half - 1);
    const double omega = kOmegaMin * std::pow(kOmegaMax / kOmegaMin, frac);
    for (int r = 0; r < ts.size(); ++r) {
      emb(r, 2 * j) = std::sin(omega * ts[r]);
      emb(r, 2 * j + 1) = std::cos(omega * ts[r]);
    }
  }
  return emb;
}

Eigen::MatrixXd ControlFunction::eval_batch(const Eigen::VectorXd& ts,
                                            const Eigen::MatrixXd& X) const {
  if (X.cols() != arch_.dim || ts.size() != X.rows()) {
    throw std::invalid_argument("eval_batch: input shape mismatch");
  }
  Layout L(arch_);
  Views v(params_.data(), L);
  Eigen::MatrixXd features(X.rows(), L.in);
  features.leftCols(arch_.dim) = X;
  features.rightCols(arch_.time_embed) = time_embedding(ts);
  Eigen::MatrixXd out;
  run_forward(v, L, features, nullptr, out);
  return out;
}

Eigen::VectorXd ControlFunction::eval(double t, const Eigen::VectorXd& x) const {
  Eigen::VectorXd ts(1);
  ts[0] = t;
  Eigen::MatrixXd X = x.transpose();
  return eval_batch(ts, X).row(0).transpose();
}

double ControlFunction::accumulate_squared_error(const Eigen::VectorXd& ts,
                                                 const Eigen::MatrixXd& X,
                                                 const Eigen::MatrixXd& targets,
                                                 Eigen::VectorXd& grad) const {
  if (X.cols() != arch_.dim || ts.size() != X.rows() || targets.rows() != X.rows() ||
      targets.cols() != arch_.dim) {
    throw std::invalid_argument("accumulate_squared_error: shape mismatch");
  }
  if (grad.size() != params_.size()) {
    throw std::invalid_argument("accumulate_squared_error: gradient buffer size mismatch");
  }
  Layout L(arch_);
  Views v(params_.data(), L);
  GradViews g(grad.data(), L);

  ForwardCache cache;
  Eigen::MatrixXd features(X.rows(), L.in);
  features.leftCols(arch_.dim) = X;
  features.rightCols(arch_.time_embed) = time_embedding(ts);
  Eigen::MatrixXd out;
  run_forward(v, L, features, &cache, out);

  Eigen::MatrixXd resid = out - targets;
  const double loss_sum = resid.squaredNorm();

  // d loss_sum / d out
  Eigen::MatrixXd dout = 2.0 * resid;
  g.w_out += dout.transpose() * (L.blocks > 0 ? cache.h_out.back() : cache.h0);
  g.b_out += dout.colwise().sum().transpose();
  Eigen::MatrixXd dh = dout * v.w_out;

  for (int b = L.blocks - 1; b >= 0; --b) {
    const std::size_t bi = static_cast<std::size_t>(b);
    const Eigen::MatrixXd& h_in = b == 0 ? cache.h0 : cache.h_out[bi - 1];
    // h_out = h_in + W2 silu(W1 h_in + b1) + b2, so dh flows to both summands
    g.w2[bi] += dh.transpose() * cache.a1[bi];
    g.b2[bi] += dh.colwise().sum().transpose();
    Eigen::MatrixXd da1 = dh * v.w2[bi];
    Eigen::MatrixXd dz1 =
        da1.array() * cache.z1[bi].unaryExpr([](double z) { return silu_grad(z); }).array();
    g.w1[bi] += dz1.transpose() * h_in;
    g.b1[bi] += dz1.colwise().sum().transpose();
    dh += dz1 * v.w1[bi];
  }

  Eigen::MatrixXd dz0 =
      dh.array() * cache.z0.unaryExpr([](double z) { return silu_grad(z); }).array();
  g.w_in += dz0.transpose() * cache.features;
  g.b_in += dz0.colwise().sum().transpose();

  return loss_sum;
}

TrainerState::TrainerState(const ControlFunction& ctrl, double lr, double decay)
    : learning_rate(lr), ema_decay(decay) {
  if (!(lr > 0.0)) throw std::invalid_argument("TrainerState: learning rate must be positive");
  if (!(decay > 0.0 && decay < 1.0)) {
    throw std::invalid_argument("TrainerState: EMA decay must lie in (0, 1)");
  }
  m = Eigen::VectorXd::Zero(ctrl.param_count());
  v = Eigen::VectorXd::Zero(ctrl.param_count());
  ema = ctrl.params();
}

void apply_update(ControlFunction& ctrl, TrainerState& state, const Eigen::VectorXd& grad_mean) {
  if (grad_mean.size() != ctrl.param_count() || state.m.size() != ctrl.param_count()) {
    throw std::invalid_argument("apply_update: size mismatch");
  }
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad_mean;
  state.v = state.beta2 * state.v.array().matrix() +
            (1.0 - state.beta2) * grad_mean.array().square().matrix();
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  Eigen::ArrayXd m_hat = state.m.array() / bc1;
  Eigen::ArrayXd v_hat = state.v.array() / bc2;
  ctrl.params().array() -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
  state.ema = state.ema_decay * state.ema + (1.0 - state.ema_decay) * ctrl.params();
}

double regression_step(ControlFunction& ctrl, const Eigen::VectorXd& ts, const Eigen::MatrixXd& X,
                       const Eigen::MatrixXd& targets, TrainerState& state) {
  const int batch = static_cast<int>(ts.size());
  if (batch < 1) throw std::invalid_argument("regression_step: empty batch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(ctrl.param_count());
  const double loss_sum = ctrl.accumulate_squared_error(ts, X, targets, grad);
  const double loss = loss_sum / batch;
  if (!std::isfinite(loss)) {
    const Eigen::MatrixXd out = ctrl.eval_batch(ts, X);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < batch; ++j) {
      if (!targets.row(j).allFinite() || !out.row(j).allFinite() || !X.row(j).allFinite()) {
        lo = std::min(lo, ts[j]);
        hi = std::max(hi, ts[j]);
      }
    }
    throw std::runtime_error("regression_step: non-finite loss for t in [" + std::to_string(lo) +
                             ", " + std::to_string(hi) + "]");
  }
  apply_update(ctrl, state, grad / batch);
  return loss;
}

double regression_step(ControlFunction& ctrl, const std::vector<RegressionSample>& batch,
                       TrainerState& state) {
  if (batch.empty()) throw std::invalid_argument("regression_step: empty batch");
  const int n = static_cast<int>(batch.size());
  const int d = ctrl.arch().dim;
  Eigen::VectorXd ts(n);
  Eigen::MatrixXd X(n, d), targets(n, d);
  for (int j = 0; j < n; ++j) {
    ts[j] = batch[static_cast<std::size_t>(j)].t;
    X.row(j) = batch[static_cast<std::size_t>(j)].x.transpose();
    targets.row(j) = batch[static_cast<std::size_t>(j)].target.transpose();
  }
  return regression_step(ctrl, ts, X, targets, state);
}

ControlFunction ema_swap(const ControlFunction& ctrl, const TrainerState& state) {
  if (state.ema.size() != ctrl.param_count()) {
    throw std::invalid_argument("ema_swap: state does not match control");
  }
  ControlFunction shadow = ctrl;
  shadow.params() = state.ema;
  return shadow;
}

}  // namespace msbm
