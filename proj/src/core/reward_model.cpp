#include "core/reward_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>
#include <utility>

namespace brm {

namespace {

void fill_gaussian(Rng& rng, double* dst, std::size_t n, double scale) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = scale * rng.gaussian();
}

double activate(Activation act, double z) {
  return act == Activation::kTanh ? std::tanh(z) : z;
}

// Derivative expressed through the activation output.
double activate_grad(Activation act, double a) {
  return act == Activation::kTanh ? 1.0 - a * a : 1.0;
}

struct ForwardTrace {
  std::vector<Vec> inputs;   // inputs[l] feeds layer l; inputs[L] feeds the head
  std::vector<Vec> lowrank;  // u_l = a_l * inputs[l]
  double output = 0.0;
};

ForwardTrace run_forward(const RewardNet& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw ShapeError("forward: input dimension " + std::to_string(x.size()) +
                     ", net expects " + std::to_string(net.input_dim()));
  }
  ForwardTrace t;
  t.inputs.reserve(net.layers.size() + 1);
  t.lowrank.reserve(net.layers.size());
  t.inputs.emplace_back(x.begin(), x.end());
  for (const Layer& layer : net.layers) {
    const Vec& a = t.inputs.back();
    Vec pre = matvec(layer.w0, a);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += layer.bias[i];
    Vec u;
    if (layer.adapter.rank() > 0) {
      u = matvec(layer.adapter.a, a);
      Vec bu = matvec(layer.adapter.b, u);
      for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += bu[i];
    }
    t.lowrank.push_back(std::move(u));
    Vec h(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) h[i] = activate(net.activation, pre[i]);
    t.inputs.push_back(std::move(h));
  }
  t.output = dot(net.head, t.inputs.back());
  return t;
}

// d output / d theta of a completed forward pass, in flatten order.
Vec backprop(const RewardNet& net, const ForwardTrace& t) {
  const std::size_t n_layers = net.layers.size();
  std::vector<Matrix> grad_a(n_layers);
  std::vector<Matrix> grad_b(n_layers);

  // delta = d output / d h_l, walked from the head down.
  Vec delta(net.head);
  for (std::size_t li = n_layers; li-- > 0;) {
    const Layer& layer = net.layers[li];
    const Vec& a_in = t.inputs[li];
    const Vec& h_out = t.inputs[li + 1];
    Vec dpre(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
      dpre[i] = delta[i] * activate_grad(net.activation, h_out[i]);
    }
    const std::size_t rank = layer.adapter.rank();
    grad_a[li] = Matrix(rank, a_in.size());
    grad_b[li] = Matrix(h_out.size(), rank);
    if (rank > 0) {
      const Vec& u = t.lowrank[li];
      Vec bt_dpre = matvec_t(layer.adapter.b, dpre);
      for (std::size_t i = 0; i < rank; ++i) {
        for (std::size_t j = 0; j < a_in.size(); ++j) {
          grad_a[li](i, j) = bt_dpre[i] * a_in[j];
        }
      }
      for (std::size_t i = 0; i < h_out.size(); ++i) {
        for (std::size_t j = 0; j < rank; ++j) {
          grad_b[li](i, j) = dpre[i] * u[j];
        }
      }
    }
    if (li > 0) {
      Vec next = matvec_t(layer.w0, dpre);
      if (rank > 0) {
        Vec bt_dpre = matvec_t(layer.adapter.b, dpre);
        Vec at = matvec_t(layer.adapter.a, bt_dpre);
        for (std::size_t j = 0; j < next.size(); ++j) next[j] += at[j];
      }
      delta = std::move(next);
    }
  }

  Vec grad(param_count(net), 0.0);
  std::size_t pos = 0;
  for (std::size_t li = 0; li < n_layers; ++li) {
    const Matrix& g = grad_a[li];
    std::copy(g.data(), g.data() + g.rows() * g.cols(), grad.begin() + pos);
    pos += g.rows() * g.cols();
  }
  for (std::size_t li = 0; li < n_layers; ++li) {
    const Matrix& g = grad_b[li];
    std::copy(g.data(), g.data() + g.rows() * g.cols(), grad.begin() + pos);
    pos += g.rows() * g.cols();
  }
  const Vec& h_last = t.inputs.back();
  std::copy(h_last.begin(), h_last.end(), grad.begin() + pos);
  return grad;
}

void write_theta(RewardNet& net, std::span<const double> theta) {
  const std::size_t expect = param_count(net);
  if (theta.size() != expect) {
    throw ShapeError("unflatten: got " + std::to_string(theta.size()) + " values, net has " +
                     std::to_string(expect) + " trainable parameters");
  }
  std::size_t pos = 0;
  for (Layer& layer : net.layers) {
    Matrix& a = layer.adapter.a;
    std::copy(theta.begin() + pos, theta.begin() + pos + a.rows() * a.cols(), a.data());
    pos += a.rows() * a.cols();
  }
  for (Layer& layer : net.layers) {
    Matrix& b = layer.adapter.b;
    std::copy(theta.begin() + pos, theta.begin() + pos + b.rows() * b.cols(), b.data());
    pos += b.rows() * b.cols();
  }
  std::copy(theta.begin() + pos, theta.end(), net.head.begin());
}

}  // namespace

RewardNet make_net(const NetSpec& spec, std::uint64_t seed) {
  if (spec.d_in == 0) throw UsageError("make_net: d_in must be >= 1");
  Rng rng(seed);
  RewardNet net;
  net.activation = spec.activation;
  net.seed = seed;
  std::size_t n_in = spec.d_in;
  for (std::size_t width : spec.widths) {
    if (spec.rank >= std::min(width, n_in) && spec.rank != 0) {
      throw UsageError("make_net: adapter rank " + std::to_string(spec.rank) +
                       " must be below min(n_in, n_out) = " +
                       std::to_string(std::min(width, n_in)));
    }
    Layer layer;
    layer.w0 = Matrix(width, n_in);
    fill_gaussian(rng, layer.w0.data(), width * n_in,
                  spec.w0_scale / std::sqrt(double(n_in)));
    layer.bias.resize(width);
    fill_gaussian(rng, layer.bias.data(), width, spec.bias_scale);
    layer.adapter.a = Matrix(spec.rank, n_in);
    fill_gaussian(rng, layer.adapter.a.data(), spec.rank * n_in, 1.0 / std::sqrt(double(n_in)));
    layer.adapter.b = Matrix(width, spec.rank);  // zero: initial model = frozen base
    net.layers.push_back(std::move(layer));
    n_in = width;
  }
  net.head.resize(n_in);
  fill_gaussian(rng, net.head.data(), n_in, spec.head_scale);
  validate_net(net);
  return net;
}

void validate_net(const RewardNet& net) {
  if (net.head.empty()) throw ShapeError("net: empty head");
  std::size_t n_in = net.input_dim();
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& layer = net.layers[li];
    const std::string tag = "net layer " + std::to_string(li) + ": ";
    if (layer.w0.cols() != n_in) {
      throw ShapeError(tag + "w0 has " + std::to_string(layer.w0.cols()) +
                       " cols, expected " + std::to_string(n_in));
    }
    if (layer.bias.size() != layer.w0.rows()) {
      throw ShapeError(tag + "bias length mismatch");
    }
    const LoraAdapter& ad = layer.adapter;
    if (ad.a.rows() != ad.b.cols()) throw ShapeError(tag + "adapter rank mismatch");
    if (ad.rank() > 0 && (ad.a.cols() != n_in || ad.b.rows() != layer.w0.rows())) {
      throw ShapeError(tag + "adapter dimensions do not match w0");
    }
    n_in = layer.w0.rows();
  }
  if (net.head.size() != n_in) {
    throw ShapeError("net: head length " + std::to_string(net.head.size()) +
                     ", expected " + std::to_string(n_in));
  }
}

std::size_t param_count(const RewardNet& net) {
  std::size_t n = net.head.size();
  for (const Layer& layer : net.layers) {
    n += layer.adapter.a.rows() * layer.adapter.a.cols();
    n += layer.adapter.b.rows() * layer.adapter.b.cols();
  }
  return n;
}

Vec flatten(const RewardNet& net) {
  Vec theta;
  theta.reserve(param_count(net));
  for (const Layer& layer : net.layers) {
    const Matrix& a = layer.adapter.a;
    theta.insert(theta.end(), a.data(), a.data() + a.rows() * a.cols());
  }
  for (const Layer& layer : net.layers) {
    const Matrix& b = layer.adapter.b;
    theta.insert(theta.end(), b.data(), b.data() + b.rows() * b.cols());
  }
  theta.insert(theta.end(), net.head.begin(), net.head.end());
  return theta;
}

RewardNet unflatten(const RewardNet& base, std::span<const double> theta) {
  RewardNet net = base;
  write_theta(net, theta);
  return net;
}

double forward(const RewardNet& net, std::span<const double> x) {
  return run_forward(net, x).output;
}

Vec reward_gradient(const RewardNet& net, std::span<const double> x) {
  const ForwardTrace t = run_forward(net, x);
  return backprop(net, t);
}

double bt_probability(double rw, double rl) {
  if (!std::isfinite(rw) || !std::isfinite(rl)) {
    throw UsageError("bt_probability: non-finite reward");
  }
  const double d = rw - rl;
  const double ad = std::abs(d);
  if (ad <= 36.0) {
    // 1 - p is exact here (p in [0.5, 1)), so the two orderings sum to
    // exactly 1.
    const double p = 1.0 / (1.0 + std::exp(-ad));
    return d >= 0.0 ? p : 1.0 - p;
  }
  const double e = std::exp(-ad);
  return d >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
}

double bt_pair_loss(double rw, double rl) { return -log_sigmoid(rw - rl); }

LossGrad bt_loss_and_grad(const RewardNet& net, std::span<const PreferenceExample> batch,
                          double lambda) {
  if (batch.empty()) throw UsageError("bt_loss_and_grad: empty batch");
  LossGrad out;
  out.grad.assign(param_count(net), 0.0);
  for (const PreferenceExample& ex : batch) {
    const ForwardTrace tw = run_forward(net, ex.winner);
    const ForwardTrace tl = run_forward(net, ex.loser);
    const double d = tw.output - tl.output;
    out.loss += bt_pair_loss(tw.output, tl.output);
    const double coeff = -sigmoid(-d);
    const Vec gw = backprop(net, tw);
    const Vec gl = backprop(net, tl);
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      out.grad[i] += coeff * (gw[i] - gl[i]);
    }
  }
  if (lambda != 0.0) {
    const Vec theta = flatten(net);
    double sq = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      sq += theta[i] * theta[i];
      out.grad[i] += lambda * theta[i];
    }
    out.loss += 0.5 * lambda * sq;
  }
  return out;
}

TrainResult train_map(const RewardNet& net, std::span<const PreferenceExample> data,
                      const TrainConfig& cfg) {
  if (data.empty()) throw UsageError("train_map: empty dataset");
  if (cfg.steps < 1) throw UsageError("train_map: steps must be >= 1");
  if (cfg.batch_size < 1) throw UsageError("train_map: batch_size must be >= 1");
  if (!(cfg.prior_precision > 0.0)) {
    throw UsageError("train_map: prior_precision must be > 0");
  }
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw UsageError("train_map: learning_rate must be positive and finite");
  }
  for (const PreferenceExample& ex : data) {
    if (ex.winner.size() != net.input_dim() || ex.loser.size() != net.input_dim()) {
      throw ShapeError("train_map: example dimension does not match net input");
    }
  }

  const std::size_t n = data.size();
  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, n);
  const double scale = double(n) / double(batch);
  const double lambda = cfg.prior_precision;

  Rng rng(cfg.seed);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::size_t cursor = n;  // forces a shuffle before the first batch

  RewardNet work = net;
  Vec theta = flatten(work);
  Vec grad(theta.size());
  TrainResult result;
  result.trace.reserve(cfg.steps);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    double data_loss = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == n) {
        for (std::size_t i = n; i-- > 1;) {
          const std::size_t j = rng.next_u64() % (i + 1);
          std::swap(perm[i], perm[j]);
        }
        cursor = 0;
      }
      const PreferenceExample& ex = data[perm[cursor++]];
      const ForwardTrace tw = run_forward(work, ex.winner);
      const ForwardTrace tl = run_forward(work, ex.loser);
      data_loss += bt_pair_loss(tw.output, tl.output);
      const double coeff = -sigmoid(-(tw.output - tl.output));
      const Vec gw = backprop(work, tw);
      const Vec gl = backprop(work, tl);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += coeff * (gw[i] - gl[i]);
    }
    double theta_sq = 0.0;
    for (double v : theta) theta_sq += v * v;
    const double objective = scale * data_loss + 0.5 * lambda * theta_sq;
    if (!std::isfinite(objective)) {
      throw NumericError("train_map: loss diverged at step " + std::to_string(step));
    }
    result.trace.push_back(objective);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] -= cfg.learning_rate * (scale * grad[i] + lambda * theta[i]);
    }
    write_theta(work, theta);
  }

  work.provenance = TrainProvenance{true, dataset_fingerprint(data), lambda};
  result.net = std::move(work);
  return result;
}

std::uint64_t dataset_fingerprint(std::span<const PreferenceExample> data) {
  std::uint64_t h = 1469598103934665603ull;
  const auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFFull;
      h *= 1099511628211ull;
    }
  };
  mix(data.size());
  mix(data.empty() ? 0 : data.front().winner.size());
  for (const PreferenceExample& ex : data) {
    mix(static_cast<std::uint64_t>(ex.prompt_id));
    for (double v : ex.winner) mix(std::bit_cast<std::uint64_t>(v));
    for (double v : ex.loser) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

}  // namespace brm
