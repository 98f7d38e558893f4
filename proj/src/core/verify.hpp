#pragma once

#include <ostream>

namespace brm {

struct VerifyOptions {
  // Negative control: perturbs the top best-of-n weight by 1e-6 so the
  // weight-sum identity check must fail.
  bool fault_bon_weights = false;
};

// Runs the built-in oracle suite (finite-difference gradients and jacobians,
// dense curvature accumulation, best-of-n enumeration, weight-sum identity,
// Cholesky reconstruction), printing one PASS/FAIL line per check.
// Returns the number of failed checks.
int run_verify(const VerifyOptions& opts, std::ostream& out);

}  // namespace brm
