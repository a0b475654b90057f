#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "persearch/geometry.hpp"
#include "persearch/replay.hpp"
#include "persearch/rng.hpp"

namespace persearch {

// Multilayer perceptron over state encodings: rectifier hidden layers,
// identity output, exactly one output per action. All training-path numerics
// are double precision.
struct QNetwork {
  struct Layer {
    int in = 0;
    int out = 0;
    std::vector<double> w;  // row-major [out][in]
    std::vector<double> b;
  };

  std::vector<int> dims;  // [D_in, hidden..., kNumActions]
  std::vector<Layer> layers;

  int input_dim() const { return dims.front(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.w.size() + l.b.size();
    return n;
  }

  // Weights uniform in +/- sqrt(6 / (fan_in + fan_out)), biases zero.
  static QNetwork init(std::vector<int> dims, Rng& rng) {
    validate_dims(dims);
    QNetwork net;
    net.dims = std::move(dims);
    net.layers.resize(net.dims.size() - 1);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      Layer& layer = net.layers[l];
      layer.in = net.dims[l];
      layer.out = net.dims[l + 1];
      layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
      layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
      const double limit = std::sqrt(6.0 / (layer.in + layer.out));
      for (double& v : layer.w) v = rng.uniform(-limit, limit);
    }
    return net;
  }

  static void validate_dims(const std::vector<int>& dims) {
    if (dims.size() < 2)
      throw std::invalid_argument("network needs at least input and output dims");
    for (int d : dims)
      if (d < 1) throw std::invalid_argument("network dims must be positive");
    if (dims.back() != kNumActions)
      throw std::invalid_argument("output layer must have exactly " +
                                  std::to_string(kNumActions) + " units");
  }

  // y[batch x out] = x[batch x in] * W^T + b, optionally rectified. Four
  // output rows share one pass over the input row.
  static void affine_batch(const Layer& layer, const double* x, int batch,
                           double* y, bool relu) {
    const int in = layer.in;
    const int out = layer.out;
    const double* w = layer.w.data();
    for (int i = 0; i < batch; ++i) {
      const double* xi = x + static_cast<std::size_t>(i) * in;
      double* yi = y + static_cast<std::size_t>(i) * out;
      int j = 0;
      for (; j + 4 <= out; j += 4) {
        const double* w0 = w + static_cast<std::size_t>(j) * in;
        const double* w1 = w0 + in;
        const double* w2 = w1 + in;
        const double* w3 = w2 + in;
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
#pragma omp simd reduction(+ : a0, a1, a2, a3)
        for (int k = 0; k < in; ++k) {
          const double v = xi[k];
          a0 += v * w0[k];
          a1 += v * w1[k];
          a2 += v * w2[k];
          a3 += v * w3[k];
        }
        yi[j + 0] = a0 + layer.b[static_cast<std::size_t>(j) + 0];
        yi[j + 1] = a1 + layer.b[static_cast<std::size_t>(j) + 1];
        yi[j + 2] = a2 + layer.b[static_cast<std::size_t>(j) + 2];
        yi[j + 3] = a3 + layer.b[static_cast<std::size_t>(j) + 3];
      }
      for (; j < out; ++j) {
        const double* wj = w + static_cast<std::size_t>(j) * in;
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (int k = 0; k < in; ++k) acc += xi[k] * wj[k];
        yi[j] = acc + layer.b[static_cast<std::size_t>(j)];
      }
      if (relu)
        for (j = 0; j < out; ++j)
          if (yi[j] < 0.0) yi[j] = 0.0;
    }
  }

  void forward_batch(const double* x, int batch, double* q) const {
    std::vector<double> a;
    std::vector<double> b;
    const double* cur = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const bool last = l + 1 == layers.size();
      double* dst;
      if (last) {
        dst = q;
      } else {
        std::vector<double>& buf = (l % 2 == 0) ? a : b;
        buf.resize(static_cast<std::size_t>(batch) * layers[l].out);
        dst = buf.data();
      }
      affine_batch(layers[l], cur, batch, dst, !last);
      cur = dst;
    }
  }

  // Q-values for a single encoding; pure.
  std::vector<double> forward(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != input_dim())
      throw std::invalid_argument("encoding length " + std::to_string(x.size()) +
                                  " does not match network input dim " +
                                  std::to_string(input_dim()));
    std::vector<double> q(kNumActions);
    forward_batch(x.data(), 1, q.data());
    return q;
  }
};

// SGD with momentum. Velocities are shaped lazily against the network.
struct OptimState {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::int64_t updates = 0;
  std::vector<std::vector<double>> vel_w;
  std::vector<std::vector<double>> vel_b;

  void ensure_shape(const QNetwork& net) {
    if (vel_w.size() == net.layers.size()) return;
    vel_w.clear();
    vel_b.clear();
    for (const QNetwork::Layer& l : net.layers) {
      vel_w.emplace_back(l.w.size(), 0.0);
      vel_b.emplace_back(l.b.size(), 0.0);
    }
  }
};

// Regression targets r + gamma * max_a' Q(s', a'), with the bootstrap masked
// on terminal transitions.
inline std::vector<double> bellman_targets(const std::vector<Transition>& batch,
                                           const QNetwork& net, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("gamma must lie in [0, 1)");
  const int B = static_cast<int>(batch.size());
  const int D = net.input_dim();
  std::vector<double> next(static_cast<std::size_t>(B) * D);
  for (int i = 0; i < B; ++i) {
    const Transition& t = batch[static_cast<std::size_t>(i)];
    if (static_cast<int>(t.next_state.size()) != D)
      throw std::invalid_argument("transition encoding length mismatch");
    std::copy(t.next_state.begin(), t.next_state.end(),
              next.begin() + static_cast<std::size_t>(i) * D);
  }
  std::vector<double> q(static_cast<std::size_t>(B) * kNumActions);
  net.forward_batch(next.data(), B, q.data());
  std::vector<double> targets(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) {
    const Transition& t = batch[static_cast<std::size_t>(i)];
    if (t.done) {
      targets[static_cast<std::size_t>(i)] = t.reward;
    } else {
      const double* qi = q.data() + static_cast<std::size_t>(i) * kNumActions;
      double best = qi[0];
      for (int a = 1; a < kNumActions; ++a) best = std::max(best, qi[a]);
      targets[static_cast<std::size_t>(i)] = t.reward + gamma * best;
    }
  }
  return targets;
}

namespace detail {

// One gradient row of delta^T * acts into `row` (zeroed here), four samples
// per pass. Returns the bias gradient for that output unit.
inline double gradient_row(const double* delta, const double* acts, int batch,
                           int out, int in, int j, double* row) {
  std::fill(row, row + in, 0.0);
  double gb = 0.0;
  int i = 0;
  for (; i + 4 <= batch; i += 4) {
    const double* d = delta + static_cast<std::size_t>(i) * out;
    const double c0 = d[j];
    const double c1 = d[j + out];
    const double c2 = d[j + 2 * out];
    const double c3 = d[j + 3 * out];
    gb += c0 + c1 + c2 + c3;
    if (c0 == 0.0 && c1 == 0.0 && c2 == 0.0 && c3 == 0.0) continue;
    const double* a0 = acts + static_cast<std::size_t>(i) * in;
    const double* a1 = a0 + in;
    const double* a2 = a1 + in;
    const double* a3 = a2 + in;
#pragma omp simd
    for (int k = 0; k < in; ++k)
      row[k] += c0 * a0[k] + c1 * a1[k] + c2 * a2[k] + c3 * a3[k];
  }
  for (; i < batch; ++i) {
    const double c = delta[static_cast<std::size_t>(i) * out + j];
    gb += c;
    if (c == 0.0) continue;
    const double* a = acts + static_cast<std::size_t>(i) * in;
#pragma omp simd
    for (int k = 0; k < in; ++k) row[k] += c * a[k];
  }
  return gb;
}

// Gradient accumulation fused with the momentum step, one weight row at a
// time so the gradient never round-trips through memory.
inline void grad_sgd_layer(QNetwork::Layer& layer, const double* delta,
                           const double* acts, int batch, std::vector<double>& vw,
                           std::vector<double>& vb, double lr, double momentum,
                           std::vector<double>& scratch) {
  scratch.resize(static_cast<std::size_t>(layer.in));
  double* row = scratch.data();
  for (int j = 0; j < layer.out; ++j) {
    const double gb =
        gradient_row(delta, acts, batch, layer.out, layer.in, j, row);
    double* w = layer.w.data() + static_cast<std::size_t>(j) * layer.in;
    double* v = vw.data() + static_cast<std::size_t>(j) * layer.in;
#pragma omp simd
    for (int k = 0; k < layer.in; ++k) {
      v[k] = momentum * v[k] - lr * row[k];
      w[k] += v[k];
    }
    vb[static_cast<std::size_t>(j)] =
        momentum * vb[static_cast<std::size_t>(j)] - lr * gb;
    layer.b[static_cast<std::size_t>(j)] += vb[static_cast<std::size_t>(j)];
  }
}

// dx[batch x in] = delta[batch x out] * W, masked by the rectifier (acts > 0).
inline void backprop_delta(const QNetwork::Layer& layer, const double* delta,
                           const double* acts, int batch, double* dx) {
  std::fill(dx, dx + static_cast<std::size_t>(batch) * layer.in, 0.0);
  for (int i = 0; i < batch; ++i) {
    const double* d = delta + static_cast<std::size_t>(i) * layer.out;
    double* dxi = dx + static_cast<std::size_t>(i) * layer.in;
    for (int j = 0; j < layer.out; ++j) {
      const double c = d[j];
      if (c == 0.0) continue;
      const double* wj = layer.w.data() + static_cast<std::size_t>(j) * layer.in;
#pragma omp simd
      for (int k = 0; k < layer.in; ++k) dxi[k] += c * wj[k];
    }
    const double* ai = acts + static_cast<std::size_t>(i) * layer.in;
    for (int k = 0; k < layer.in; ++k)
      if (ai[k] <= 0.0) dxi[k] = 0.0;
  }
}

}  // namespace detail

// One optimizer step on the mean squared Bellman error. Only the taken
// action's Q-value contributes per sample; targets are constants. Returns the
// batch loss. Throws on a non-finite loss before touching the parameters.
inline double update(QNetwork& net, OptimState& opt,
                     const std::vector<Transition>& batch,
                     std::span<const double> targets) {
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw std::invalid_argument("update needs a non-empty batch");
  if (targets.size() != batch.size())
    throw std::invalid_argument("targets are not aligned with the batch");
  opt.ensure_shape(net);

  const int D = net.input_dim();
  const std::size_t L = net.layers.size();

  // Forward with cached post-activation values per layer.
  std::vector<double> x(static_cast<std::size_t>(B) * D);
  for (int i = 0; i < B; ++i) {
    const Transition& t = batch[static_cast<std::size_t>(i)];
    if (static_cast<int>(t.state.size()) != D)
      throw std::invalid_argument("transition encoding length mismatch");
    std::copy(t.state.begin(), t.state.end(),
              x.begin() + static_cast<std::size_t>(i) * D);
  }
  std::vector<std::vector<double>> acts(L);  // acts[l]: output of layer l
  const double* cur = x.data();
  for (std::size_t l = 0; l < L; ++l) {
    acts[l].resize(static_cast<std::size_t>(B) * net.layers[l].out);
    QNetwork::affine_batch(net.layers[l], cur, B, acts[l].data(), l + 1 != L);
    cur = acts[l].data();
  }

  // Loss and output delta, live only at the taken action.
  const std::vector<double>& q = acts[L - 1];
  std::vector<double> delta(static_cast<std::size_t>(B) * kNumActions, 0.0);
  double loss = 0.0;
  for (int i = 0; i < B; ++i) {
    const int a = action_index(batch[static_cast<std::size_t>(i)].action);
    const double diff =
        q[static_cast<std::size_t>(i) * kNumActions + a] - targets[i];
    loss += diff * diff;
    delta[static_cast<std::size_t>(i) * kNumActions + a] = 2.0 * diff / B;
  }
  loss /= B;
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite training loss (" << loss << ") on a batch of " << B
        << " after " << opt.updates << " updates";
    throw std::runtime_error(msg.str());
  }

  // Backward pass with the optimizer step fused per layer. The delta for the
  // layer below is always propagated before that layer's weights move.
  std::vector<double> d = std::move(delta);
  std::vector<double> scratch;
  for (std::size_t l = L; l-- > 0;) {
    QNetwork::Layer& layer = net.layers[l];
    const double* below = l == 0 ? x.data() : acts[l - 1].data();
    std::vector<double> dprev;
    if (l > 0) {
      dprev.resize(static_cast<std::size_t>(B) * layer.in);
      detail::backprop_delta(layer, d.data(), below, B, dprev.data());
    }
    detail::grad_sgd_layer(layer, d.data(), below, B, opt.vel_w[l],
                           opt.vel_b[l], opt.learning_rate, opt.momentum,
                           scratch);
    d = std::move(dprev);
  }
  ++opt.updates;
  return loss;
}

// -------------------------------------------------------------- checkpoints
//
// Text format, bit-exact for doubles:
//   line 1: "QNET v1"
//   line 2: layer dims, space separated
//   then one parameter per line (%.17g), layer by layer, weights before biases
//   then "OPT sgd-momentum <lr> <momentum> <updates>"
//   then the momentum velocities, one per line, in parameter order.

namespace detail {

inline void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g\n", v);
  out += buf;
}

inline double parse_number(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(std::string("checkpoint truncated while reading ") +
                             what);
  char* end = nullptr;
  const double v = std::strtod(line.c_str(), &end);
  if (end == line.c_str())
    throw std::runtime_error(std::string("checkpoint has a malformed ") + what +
                             ": \"" + line + "\"");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const QNetwork& net, const OptimState& opt,
                            const std::filesystem::path& path) {
  std::string out = "QNET v1\n";
  for (std::size_t i = 0; i < net.dims.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(net.dims[i]);
  }
  out += '\n';
  for (const QNetwork::Layer& l : net.layers) {
    for (double v : l.w) detail::append_number(out, v);
    for (double v : l.b) detail::append_number(out, v);
  }
  {
    char buf[128];
    std::snprintf(buf, sizeof buf, "OPT sgd-momentum %.17g %.17g %lld\n",
                  opt.learning_rate, opt.momentum,
                  static_cast<long long>(opt.updates));
    out += buf;
  }
  OptimState shaped = opt;  // velocities may be lazily unshaped on a fresh net
  shaped.ensure_shape(net);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    for (double v : shaped.vel_w[l]) detail::append_number(out, v);
    for (double v : shaped.vel_b[l]) detail::append_number(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("checkpoint write failed: " + path.string());
}

inline std::pair<QNetwork, OptimState> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "QNET v1")
    throw std::runtime_error("not a QNET v1 checkpoint: " + path.string());
  if (!std::getline(in, line))
    throw std::runtime_error("checkpoint missing dimension line");
  QNetwork net;
  {
    std::istringstream ds(line);
    int d;
    while (ds >> d) net.dims.push_back(d);
  }
  QNetwork::validate_dims(net.dims);
  net.layers.resize(net.dims.size() - 1);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    QNetwork::Layer& layer = net.layers[l];
    layer.in = net.dims[l];
    layer.out = net.dims[l + 1];
    layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
    layer.b.resize(static_cast<std::size_t>(layer.out));
    for (double& v : layer.w) v = detail::parse_number(in, "weight");
    for (double& v : layer.b) v = detail::parse_number(in, "bias");
  }
  OptimState opt;
  {
    if (!std::getline(in, line))
      throw std::runtime_error("checkpoint missing optimizer section");
    std::istringstream os(line);
    std::string tag, kind;
    long long updates = 0;
    if (!(os >> tag >> kind >> opt.learning_rate >> opt.momentum >> updates) ||
        tag != "OPT" || kind != "sgd-momentum")
      throw std::runtime_error("malformed optimizer line: \"" + line + "\"");
    opt.updates = updates;
  }
  opt.ensure_shape(net);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    for (double& v : opt.vel_w[l]) v = detail::parse_number(in, "velocity");
    for (double& v : opt.vel_b[l]) v = detail::parse_number(in, "velocity");
  }
  return {std::move(net), std::move(opt)};
}

}  // namespace persearch
