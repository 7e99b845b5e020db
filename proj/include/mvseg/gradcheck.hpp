#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mvseg {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0;
  std::size_t probes = 0;
};

/// Compares every backward pass against central differences on small random
/// instances (16x16, K <= 3). Each entry probes random directions and single
/// coordinates; relative error is |a - n| / max(|a|, |n|, floor).
std::vector<GradCheckEntry> run_gradient_checks(std::uint64_t seed, double step = 1e-6);

}  // namespace mvseg
