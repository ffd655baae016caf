#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "chemoflow/config.hpp"

namespace chemoflow {

struct RunSummary {
  double t_final = 0.0;
  int steps = 0;
  std::vector<double> snapshot_times;  // times actually written
};

/// Runs a configured simulation (fluid-coupled when enabled) and writes
/// metadata.json, diagnostics.csv and one file per field and snapshot into
/// cfg.output.out_dir. Throws StepFailure when a step cannot be completed.
RunSummary execute_run(const RunConfig& cfg, std::ostream& log);

/// Kinetic-vs-macro study over cfg.kinetic.eps; writes convergence.csv.
std::vector<ConvergenceRow> execute_kinetic_study(const RunConfig& cfg, std::ostream& log);

struct InvariantResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Short run of a configuration with per-step invariant checks: finite fields,
/// nonnegativity, the mass growth bound and, with a fluid, discrete divergence.
std::vector<InvariantResult> check_invariants(const RunConfig& cfg, int steps);

/// Exit codes: 0 success, 1 solver failure, 2 configuration or usage error.
int cli_main(int argc, char** argv);

}  // namespace chemoflow
