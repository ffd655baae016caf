#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chemoflow/fluid_solver.hpp"
#include "chemoflow/io.hpp"
#include "chemoflow/kinetic.hpp"
#include "chemoflow/macro_solver.hpp"
#include "chemoflow/mesh.hpp"
#include "chemoflow/model.hpp"

namespace chemoflow {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gaussian bump amplitude * exp(-|x - center|² / radius²), per species.
struct Pocket {
  Vec2 center = Vec2::Zero();
  double radius = 0.05;
  double amplitude1 = 0.0;
  double amplitude2 = 0.0;
};

struct InitialCondition {
  enum class Kind { Uniform, Pockets, Stationary };
  Kind kind = Kind::Uniform;
  double background1 = 0.0;
  double background2 = 0.0;
  std::vector<Pocket> pockets;
  /// Stationary kind: n_i = n_i* + perturbation * U[0,1) from the run seed.
  double perturbation = 0.0;
};

struct KineticStudyConfig {
  std::vector<double> eps{0.4, 0.2, 0.1};
  int cells = 200;
  double length = 1.0;
  double dt = 5e-4;
  double t_end = 0.25;
  double r = 1.0;
  double sigma1 = 10.0;
  double sigma2 = 10.0;
};

struct OutputConfig {
  std::string out_dir = "out";
  SnapshotFormat format = SnapshotFormat::Csv;
  std::vector<double> snapshot_times;
  double snapshot_interval = 0.0;  // 0: only the listed times
  std::vector<std::string> fields{"n1", "n2", "w1", "w2"};
};

struct RunConfig {
  std::string preset;  // name of the base preset, empty when fully explicit
  GridSpec grid;
  ModelParams model;
  StepConfig step;
  double t_end = 0.1;
  InitialCondition initial;
  bool fluid_enabled = false;
  FluidConfig fluid;
  KineticStudyConfig kinetic;
  OutputConfig output;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
  /// Listed snapshot times merged with multiples of snapshot_interval up to t_end.
  std::vector<double> snapshot_schedule() const;
};

const std::vector<std::string>& preset_names();
/// example1, example2, example3, test1, test2. Throws ConfigError when unknown.
RunConfig preset(const std::string& name);

/// TOML text. A top-level `preset` seeds every section; a section may instead
/// name its own `preset` (and nothing else) or list explicit keys that override
/// the base. Unknown keys are rejected.
RunConfig parse_config(std::string_view text, const std::string& source = "<string>");
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& cfg);

/// Cell averages of the configured initial densities (center sampling).
MacroState initial_state(const Mesh& mesh, const RunConfig& cfg);

KineticSetup kinetic_setup(const RunConfig& cfg);

}  // namespace chemoflow
