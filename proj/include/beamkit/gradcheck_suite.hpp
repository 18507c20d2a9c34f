// Registered gradient checks: every differentiable op in isolation against
// central differences, plus composed models (2-layer network, full
// beam-mixing model in every trainable dictionary regime at micro size).
#ifndef BEAMKIT_GRADCHECK_SUITE_HPP
#define BEAMKIT_GRADCHECK_SUITE_HPP

#include <string>
#include <vector>

namespace beamkit {

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Deterministic; returns one entry per registered check.
std::vector<GradCheckCase> run_gradient_checks();

}  // namespace beamkit

#endif  // BEAMKIT_GRADCHECK_SUITE_HPP
