#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "chemoflow/macro_solver.hpp"
#include "chemoflow/mesh.hpp"

namespace chemoflow {

/// One scalar field on the full nx x ny grid, values[i + nx * j].
struct SnapshotRecord {
  double time = 0.0;
  std::string field;
  int nx = 0;
  int ny = 0;
  std::vector<double> values;

  void validate() const;
};

enum class SnapshotFormat { Csv, Pgm };

SnapshotFormat parse_format(const std::string& name);
std::string to_string(SnapshotFormat f);

/// Scatter fluid-numbered values onto the grid; solid cells read 0.
SnapshotRecord field_record(const Mesh& mesh, const Eigen::VectorXd& fluid_values, double t, std::string name);
/// Grid-shaped array (nx x ny) as a record.
SnapshotRecord field_record(const Eigen::ArrayXXd& grid_values, double t, std::string name);

/// CSV: `# t=<t> field=<name> nx=<nx> ny=<ny>` then row j = 0..ny-1, %.17g.
/// PGM: binary P5, min-max scaled to 0..255, `# min=<a> max=<b>` comment,
/// top image row is j = ny-1.
void write_snapshot(const SnapshotRecord& rec, SnapshotFormat format, const std::filesystem::path& path);
SnapshotRecord read_snapshot_csv(const std::filesystem::path& path);

std::string snapshot_filename(const std::string& field, int index, SnapshotFormat format);

/// Appends one CSV row per accepted step.
class DiagnosticsWriter {
 public:
  DiagnosticsWriter(const std::filesystem::path& path, bool fluid_columns);
  void write(const Diagnostics& d);
  void write(const Diagnostics& d, double kinetic_energy, double max_divergence, double vertical_momentum);

 private:
  std::ofstream out_;
  bool fluid_;
};

std::string format_double(double v);

}  // namespace chemoflow
