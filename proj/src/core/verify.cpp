#include "core/verify.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <string>
#include <vector>

#include "core/bon.hpp"
#include "core/io.hpp"
#include "core/laplace.hpp"
#include "core/reward_model.hpp"

namespace brm {

namespace {

struct Reporter {
  std::ostream& out;
  int failures = 0;

  void check(const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << " (" << detail << ")\n";
    if (!ok) ++failures;
  }
};

Vec central_fd(const std::function<double(std::span<const double>)>& f, Vec theta,
               double step) {
  Vec grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + step;
    const double hi = f(theta);
    theta[i] = saved - step;
    const double lo = f(theta);
    theta[i] = saved;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

double max_rel_err(std::span<const double> got, std::span<const double> want, double guard) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max({std::abs(got[i]), std::abs(want[i]), guard});
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

// Small seeded net with randomized adapters (B nonzero) so every block has
// generic gradients.
RewardNet test_net(std::uint64_t seed, std::size_t d_in, std::vector<std::size_t> widths,
                   std::size_t rank) {
  NetSpec spec;
  spec.d_in = d_in;
  spec.widths = std::move(widths);
  spec.rank = rank;
  spec.head_scale = 0.3;
  spec.bias_scale = 0.3;
  RewardNet net = make_net(spec, seed);
  Rng rng(seed ^ 0xABCDEF12345ull);
  Vec theta = flatten(net);
  for (double& v : theta) v = 0.4 * rng.gaussian();
  return unflatten(net, theta);
}

std::vector<PreferenceExample> test_batch(std::uint64_t seed, std::size_t d_in,
                                          std::size_t count) {
  Rng rng(seed);
  std::vector<PreferenceExample> batch(count);
  for (std::size_t i = 0; i < count; ++i) {
    batch[i].prompt_id = static_cast<std::int64_t>(i);
    batch[i].winner.resize(d_in);
    batch[i].loser.resize(d_in);
    for (double& v : batch[i].winner) v = rng.gaussian();
    for (double& v : batch[i].loser) v = rng.gaussian();
  }
  return batch;
}

void verify_gradient_fd(Reporter& rep) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const RewardNet net = test_net(seed, 6, {8}, 2);
    const auto batch = test_batch(seed + 50, 6, 5);
    const double lambda = 0.1;
    const LossGrad lg = bt_loss_and_grad(net, batch, lambda);
    const RewardNet base = net;
    const Vec fd = central_fd(
        [&](std::span<const double> theta) {
          return bt_loss_and_grad(unflatten(base, theta), batch, lambda).loss;
        },
        flatten(net), 1e-5);
    worst = std::max(worst, max_rel_err(lg.grad, fd, 1e-8));
  }
  rep.check("gradient-fd", worst < 1e-5, "max rel err " + format_double(worst));
}

void verify_jacobian_fd(Reporter& rep) {
  double worst = 0.0;
  for (std::uint64_t seed = 11; seed <= 14; ++seed) {
    const RewardNet net = test_net(seed, 5, {7}, 2);
    Rng rng(seed * 7919);
    Vec x(5);
    for (double& v : x) v = rng.gaussian();
    const Vec j = score_jacobian(net, x);
    const RewardNet base = net;
    const Vec fd = central_fd(
        [&](std::span<const double> theta) { return forward(unflatten(base, theta), x); },
        flatten(net), 1e-5);
    worst = std::max(worst, max_rel_err(j, fd, 1e-8));
  }
  rep.check("jacobian-fd", worst < 1e-5, "max rel err " + format_double(worst));
}

void verify_ggn_dense(Reporter& rep) {
  double worst = 0.0;
  for (std::uint64_t seed = 21; seed <= 23; ++seed) {
    const RewardNet net = test_net(seed, 4, {5}, 2);
    const auto batch = test_batch(seed + 70, 4, 12);
    const double lambda = 0.7;
    const Matrix h = ggn_precision(net, batch, lambda);
    const std::size_t p = h.rows();
    // Straight-line accumulation of the same curvature.
    Matrix oracle(p, p);
    for (std::size_t i = 0; i < p; ++i) oracle(i, i) = lambda;
    for (const PreferenceExample& ex : batch) {
      const Vec gw = score_jacobian(net, ex.winner);
      const Vec gl = score_jacobian(net, ex.loser);
      const double d = forward(net, ex.winner) - forward(net, ex.loser);
      const double w = sigmoid(d) * (1.0 - sigmoid(d));
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
          oracle(i, j) += w * (gw[i] - gl[i]) * (gw[j] - gl[j]);
        }
      }
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        num += (h(i, j) - oracle(i, j)) * (h(i, j) - oracle(i, j));
        den += oracle(i, j) * oracle(i, j);
      }
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  rep.check("ggn-dense-oracle", worst < 1e-8, "max rel frobenius " + format_double(worst));
}

void verify_bon_enumeration(Reporter& rep) {
  double worst = 0.0;
  Rng rng(404);
  for (int rep_i = 0; rep_i < 5; ++rep_i) {
    const std::size_t n_total = 6 + static_cast<std::size_t>(rng.next_u64() % 5);
    Vec proxy(n_total), eval(n_total);
    for (double& v : proxy) v = rng.gaussian();
    for (double& v : eval) v = rng.gaussian();
    for (std::size_t n = 1; n <= n_total; ++n) {
      const double est = bon_expected_reward(proxy, eval, n);
      const double oracle = enumeration_oracle(proxy, eval, n);
      worst = std::max(worst, std::abs(est - oracle));
    }
  }
  rep.check("bon-enumeration", worst < 1e-10, "max abs err " + format_double(worst));
}

void verify_weight_identity(Reporter& rep) {
  double worst = 0.0;
  for (std::size_t n : {std::size_t{1}, std::size_t{2}, std::size_t{16}, std::size_t{256},
                        std::size_t{12500}}) {
    const Vec w = bon_weights(12500, n);
    worst = std::max(worst, std::abs(pairwise_sum(w) - 1.0));
  }
  rep.check("bon-weight-identity", worst < 1e-12, "max |sum - 1| " + format_double(worst));
}

void verify_cholesky(Reporter& rep) {
  Rng rng(505);
  double worst = 0.0;
  for (int rep_i = 0; rep_i < 3; ++rep_i) {
    const std::size_t n = 8;
    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) g(i, j) = rng.gaussian();
    }
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = i == j ? 1.0 : 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += g(k, i) * g(k, j);
        m(i, j) = acc;
      }
    }
    const Matrix l = cholesky_spd(m);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k <= std::min(i, j); ++k) acc += l(i, k) * l(j, k);
        num += (acc - m(i, j)) * (acc - m(i, j));
        den += m(i, j) * m(i, j);
      }
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  rep.check("cholesky-reconstruction", worst < 1e-10,
            "max rel frobenius " + format_double(worst));
}

}  // namespace

int run_verify(const VerifyOptions& opts, std::ostream& out) {
  Reporter rep{out};
  if (opts.fault_bon_weights) detail::set_bon_weight_fault(1e-6);
  verify_gradient_fd(rep);
  verify_jacobian_fd(rep);
  verify_ggn_dense(rep);
  verify_bon_enumeration(rep);
  verify_weight_identity(rep);
  verify_cholesky(rep);
  if (opts.fault_bon_weights) detail::set_bon_weight_fault(0.0);
  out << (rep.failures == 0 ? "verify: all checks passed\n"
                            : "verify: " + std::to_string(rep.failures) + " check(s) failed\n");
  return rep.failures;
}

}  // namespace brm
