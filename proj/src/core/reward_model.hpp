#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/numerics.hpp"

namespace brm {

// One labeled comparison. Winner and loser are response feature vectors of
// the same dimension.
struct PreferenceExample {
  std::int64_t prompt_id = 0;
  Vec winner;
  Vec loser;
};

enum class Activation { kTanh, kLinear };

// Trainable low-rank perturbation delta_w = b * a of a frozen weight matrix.
// a is rank x n_in, b is n_out x rank. rank 0 disables the adapter.
struct LoraAdapter {
  Matrix a;
  Matrix b;
  std::size_t rank() const { return a.rows(); }
};

struct Layer {
  Matrix w0;  // frozen, n_out x n_in
  Vec bias;   // frozen, n_out
  LoraAdapter adapter;
};

// Set by train_map so a later Laplace fit can detect a data/prior mismatch.
struct TrainProvenance {
  bool present = false;
  std::uint64_t data_fingerprint = 0;
  double lambda = 0.0;
};

// Scalar reward network with frozen base weights and trainable adapters plus
// head. With no layers the head acts directly on the input (a plain linear
// model), which is the smallest trainable configuration.
struct RewardNet {
  std::vector<Layer> layers;
  Vec head;
  Activation activation = Activation::kTanh;
  std::uint64_t seed = 0;
  TrainProvenance provenance;

  std::size_t input_dim() const {
    return layers.empty() ? head.size() : layers.front().w0.cols();
  }
};

struct NetSpec {
  std::size_t d_in = 8;
  std::vector<std::size_t> widths = {16, 16};
  std::size_t rank = 4;
  Activation activation = Activation::kTanh;
  double head_scale = 0.1;
  double bias_scale = 0.5;
  // Multiplies the 1/sqrt(n_in) base-weight init. Values above 1 sharpen the
  // network's features (shorter correlation length in input space).
  double w0_scale = 1.0;
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  double prior_precision = 1.0;  // lambda; also the Laplace prior
  std::uint64_t seed = 0;
};

// Seeded construction: per layer draws w0 (gaussian / sqrt(n_in)), bias
// (gaussian * bias_scale), a (gaussian / sqrt(n_in)); b starts at zero so the
// initial model equals the frozen base. Head is gaussian * head_scale.
RewardNet make_net(const NetSpec& spec, std::uint64_t seed);

// Throws ShapeError if layer/adapter/head dimensions are inconsistent.
void validate_net(const RewardNet& net);

std::size_t param_count(const RewardNet& net);

// Trainable parameters in a fixed order: every adapter a in layer order
// (row-major), then every adapter b in layer order (row-major), then head.
Vec flatten(const RewardNet& net);

// Returns base with its trainable parameters replaced by theta (same order
// as flatten). Frozen weights are untouched.
RewardNet unflatten(const RewardNet& base, std::span<const double> theta);

double forward(const RewardNet& net, std::span<const double> x);

// d forward / d theta, in flatten order.
Vec reward_gradient(const RewardNet& net, std::span<const double> x);

// P(first beats second) = sigmoid(rw - rl). Exactly 0.5 on ties; the pair
// (a,b), (b,a) sums to exactly 1.
double bt_probability(double rw, double rl);

// Data term of one comparison: -log sigmoid(rw - rl). Depends on the rewards
// only through their difference.
double bt_pair_loss(double rw, double rl);

// Negative Bradley-Terry log-likelihood summed over the batch plus
// (lambda/2)*|theta|^2, with its gradient over the trainable parameters.
struct LossGrad {
  double loss = 0.0;
  Vec grad;
};
LossGrad bt_loss_and_grad(const RewardNet& net, std::span<const PreferenceExample> batch,
                          double lambda);

// Seeded mini-batch gradient descent on the regularized loss. The trace holds
// one entry per step: the full-objective estimate from that step's batch at
// the pre-update parameters. Throws NumericError naming the step if the loss
// becomes non-finite.
struct TrainResult {
  RewardNet net;
  Vec trace;
};
TrainResult train_map(const RewardNet& net, std::span<const PreferenceExample> data,
                      const TrainConfig& cfg);

// Order- and content-sensitive hash of a preference dataset.
std::uint64_t dataset_fingerprint(std::span<const PreferenceExample> data);

}  // namespace brm
