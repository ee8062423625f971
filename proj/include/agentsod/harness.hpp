#pragma once

// Gradient and scaling harnesses shared by the CLI and the acceptance suite.

#include "agentsod/attention.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace agentsod {

struct GradcheckResult {
  std::string block;  // "SACA", "CCA" or "MLP"
  double max_relative_error = 0.0;
  int tensors_checked = 0;
};

/// Small geometry used for finite-difference checks.
AgentGeometry gradcheck_geometry();

/// Analytic gradients vs central differences for the spatial kernel, the
/// channel kernel and the MLP residual, with respect to every input and
/// parameter tensor, over each seed. Error is the norm-wise relative error
/// per tensor; the result keeps the worst one per block.
std::vector<GradcheckResult> run_gradcheck(const std::vector<std::uint64_t>& seeds, float h = 1e-3f);

struct BenchRow {
  int tokens;
  std::string kernel;  // "full" or "agent"
  double median_seconds;
};

struct BenchResult {
  std::vector<BenchRow> rows;  // size-major, full before agent
  double full_slope = 0.0;
  double agent_slope = 0.0;
  /// True if any median is below the timer's resolution.
  bool resolution_warning = false;
};

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Times full multi-head attention with N keys against spatial agent
/// attention (49 agents, 128 channels) for each N; sizes must be perfect
/// squares >= 49.
BenchResult run_bench(const std::vector<int>& sizes, int repeats, std::uint64_t seed = 7);

}  // namespace agentsod
