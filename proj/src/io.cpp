#include "chemoflow/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace chemoflow {

void SnapshotRecord::validate() const {
  if (nx < 1 || ny < 1) throw std::invalid_argument("snapshot: grid dims must be positive");
  if (values.size() != static_cast<std::size_t>(nx) * ny)
    throw std::invalid_argument("snapshot: value count differs from nx*ny");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("snapshot: non-finite value in field " + field);
}

SnapshotFormat parse_format(const std::string& name) {
  if (name == "csv") return SnapshotFormat::Csv;
  if (name == "pgm") return SnapshotFormat::Pgm;
  throw std::invalid_argument("unknown snapshot format '" + name + "' (csv, pgm)");
}

std::string to_string(SnapshotFormat f) { return f == SnapshotFormat::Csv ? "csv" : "pgm"; }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SnapshotRecord field_record(const Mesh& mesh, const Eigen::VectorXd& fluid_values, double t, std::string name) {
  if (fluid_values.size() != mesh.fluid_count()) throw std::invalid_argument("field_record: length mismatch");
  SnapshotRecord r;
  r.time = t;
  r.field = std::move(name);
  r.nx = mesh.nx();
  r.ny = mesh.ny();
  r.values.assign(static_cast<std::size_t>(mesh.cell_count()), 0.0);
  for (int k = 0; k < mesh.fluid_count(); ++k) r.values[mesh.linear(mesh.fluid_cell(k))] = fluid_values[k];
  return r;
}

SnapshotRecord field_record(const Eigen::ArrayXXd& grid_values, double t, std::string name) {
  SnapshotRecord r;
  r.time = t;
  r.field = std::move(name);
  r.nx = static_cast<int>(grid_values.rows());
  r.ny = static_cast<int>(grid_values.cols());
  r.values.resize(grid_values.size());
  for (int j = 0; j < r.ny; ++j)
    for (int i = 0; i < r.nx; ++i) r.values[i + r.nx * j] = grid_values(i, j);
  return r;
}

void write_snapshot(const SnapshotRecord& rec, SnapshotFormat format, const std::filesystem::path& path) {
  rec.validate();
  if (format == SnapshotFormat::Csv) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "# t=" << format_double(rec.time) << " field=" << rec.field << " nx=" << rec.nx << " ny=" << rec.ny
        << '\n';
    for (int j = 0; j < rec.ny; ++j) {
      for (int i = 0; i < rec.nx; ++i) {
        if (i) out << ',';
        out << format_double(rec.values[i + rec.nx * j]);
      }
      out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
    return;
  }

  const auto [lo, hi] = std::minmax_element(rec.values.begin(), rec.values.end());
  const double mn = *lo, mx = *hi;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "P5\n# min=" << format_double(mn) << " max=" << format_double(mx) << '\n'
      << rec.nx << ' ' << rec.ny << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(rec.nx));
  for (int j = rec.ny - 1; j >= 0; --j) {
    for (int i = 0; i < rec.nx; ++i) {
      const double v = rec.values[i + rec.nx * j];
      const double s = mx > mn ? (v - mn) / (mx - mn) : 0.0;
      row[i] = static_cast<unsigned char>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

SnapshotRecord read_snapshot_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  SnapshotRecord r;
  char field[256] = {0};
  if (std::sscanf(header.c_str(), "# t=%lf field=%255s nx=%d ny=%d", &r.time, field, &r.nx, &r.ny) != 4)
    throw std::runtime_error("snapshot: malformed header in " + path.string());
  r.field = field;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) r.values.push_back(std::strtod(cell.c_str(), nullptr));
  }
  r.validate();
  return r;
}

std::string snapshot_filename(const std::string& field, int index, SnapshotFormat format) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "_%04d.", index);
  return field + buf + to_string(format);
}

DiagnosticsWriter::DiagnosticsWriter(const std::filesystem::path& path, bool fluid_columns)
    : out_(path), fluid_(fluid_columns) {
  if (!out_) throw std::runtime_error("cannot open " + path.string());
  out_ << "t,dt,mass1,mass2,min1,min2,max1,max2,l2_1,l2_2,newton_iterations,gmres_iterations,residual";
  if (fluid_) out_ << ",kinetic_energy,max_divergence,vertical_momentum";
  out_ << '\n';
}

void DiagnosticsWriter::write(const Diagnostics& d) {
  if (fluid_) throw std::logic_error("diagnostics: fluid columns expected");
  out_ << format_double(d.t) << ',' << format_double(d.dt);
  for (const auto* a : {&d.mass, &d.min, &d.max, &d.l2}) out_ << ',' << format_double((*a)[0]) << ',' << format_double((*a)[1]);
  out_ << ',' << d.newton_iterations << ',' << d.gmres_iterations << ',' << format_double(d.residual) << '\n';
}

void DiagnosticsWriter::write(const Diagnostics& d, double kinetic_energy, double max_divergence,
                              double vertical_momentum) {
  if (!fluid_) throw std::logic_error("diagnostics: no fluid columns");
  out_ << format_double(d.t) << ',' << format_double(d.dt);
  for (const auto* a : {&d.mass, &d.min, &d.max, &d.l2}) out_ << ',' << format_double((*a)[0]) << ',' << format_double((*a)[1]);
  out_ << ',' << d.newton_iterations << ',' << d.gmres_iterations << ',' << format_double(d.residual) << ','
       << format_double(kinetic_energy) << ',' << format_double(max_divergence) << ','
       << format_double(vertical_momentum) << '\n';
}

}  // namespace chemoflow
