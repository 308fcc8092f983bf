#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adarts/tensor.hpp"

namespace adarts {

struct GradCheckCase {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t elements = 0;  // coordinates compared
  double rel_error = 0.0;    // worst over the checked tensors
  // False when central differences at h and h/2 disagree, i.e. the point lies
  // within h of a kink (ReLU, max, mask switch) and the stencil is invalid.
  bool smooth = true;
  std::size_t redraws = 0;
};

struct GradCheckReport {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::vector<GradCheckCase> cases;

  double max_error() const;
  std::size_t failures() const;
  std::size_t redraws() const;
  bool passed() const { return failures() == 0; }
};

/// Compares backward() against central differences for every tensor in
/// `targets`. The loss is Σ r·out with r drawn once from `seed`, so every
/// output element carries a distinct weight.
GradCheckCase check_gradients(const std::string& name, std::uint64_t seed,
                              const std::vector<Tensor>& targets,
                              const std::function<Tensor()>& forward, double h);

/// Names of the op families exercised by run_gradcheck.
std::vector<std::string> gradcheck_families();

/// `cases_per_family` seeded cases per family, seeds derived from `seed`. A
/// draw whose stencil is not smooth is replaced by the next seed (at most
/// kMaxRedraws times, after which the last draw is reported as is).
inline constexpr std::size_t kMaxRedraws = 8;
GradCheckReport run_gradcheck(std::uint64_t seed, std::size_t cases_per_family = 4,
                              double h = 1e-5, double tolerance = 1e-4);

}  // namespace adarts
