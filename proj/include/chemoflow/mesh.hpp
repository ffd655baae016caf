#pragma once

#include <Eigen/Core>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace chemoflow {

using Vec2 = Eigen::Vector2d;

/// Boundary classification of the channel geometry. Walls are numbered
/// counter-clockwise from the bottom; the two obstacle families follow.
enum class BoundaryTag : std::uint8_t {
  Interior = 0,
  Bottom = 1,     // Γ1, slip wall
  Outlet = 2,     // Γ2, right side
  Top = 3,        // Γ3, slip wall
  Inlet = 4,      // Γ4, left side
  Obstacle1 = 5,  // Γ5
  Obstacle2 = 6,  // Γ6
};

std::string to_string(BoundaryTag tag);
inline bool is_obstacle(BoundaryTag t) { return t == BoundaryTag::Obstacle1 || t == BoundaryTag::Obstacle2; }

struct Obstacle {
  enum class Shape { Rectangle, Circle };

  Shape shape = Shape::Rectangle;
  Vec2 lo = Vec2::Zero();  // rectangle corners
  Vec2 hi = Vec2::Zero();
  Vec2 center = Vec2::Zero();  // circle
  double radius = 0.0;
  BoundaryTag tag = BoundaryTag::Obstacle1;

  static Obstacle rectangle(Vec2 lo, Vec2 hi, BoundaryTag tag = BoundaryTag::Obstacle1);
  static Obstacle circle(Vec2 center, double radius, BoundaryTag tag = BoundaryTag::Obstacle1);

  bool contains(const Vec2& p) const;
};

struct GridSpec {
  int nx = 2;
  int ny = 2;
  double lx = 1.0;
  double ly = 1.0;
  Vec2 origin = Vec2::Zero();
  std::vector<Obstacle> obstacles;
};

struct CellIndex {
  int i = 0;
  int j = 0;
  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

enum class Axis : std::uint8_t { X, Y };

/// An interface σ between two fluid control volumes, or between a fluid
/// volume and the boundary. Interior faces are stored once, oriented from the
/// lower-index owner (left/bottom) to its neighbor.
struct Face {
  CellIndex owner;
  std::optional<CellIndex> neighbor;
  BoundaryTag tag = BoundaryTag::Interior;
  Axis axis = Axis::X;
  double measure = 0.0;   // |σ|
  double distance = 0.0;  // d_{K,L}; center-to-face for boundary faces
  Vec2 normal = Vec2::Zero();  // unit, outward from owner
  int owner_fluid = -1;
  int neighbor_fluid = -1;

  bool is_boundary() const { return !neighbor.has_value(); }
  double transmissibility() const { return measure / distance; }
  /// Same interface seen from the neighbor side.
  Face flipped() const;
};

/// Uniform Cartesian control-volume mesh with cell-center obstacle masking.
/// Immutable after construction.
class Mesh {
 public:
  explicit Mesh(GridSpec spec);

  const GridSpec& spec() const { return spec_; }
  int nx() const { return spec_.nx; }
  int ny() const { return spec_.ny; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  double cell_measure() const { return dx_ * dy_; }

  int cell_count() const { return spec_.nx * spec_.ny; }
  int fluid_count() const { return static_cast<int>(fluid_cells_.size()); }
  int solid_count() const { return cell_count() - fluid_count(); }

  /// Row-major linear index, i fastest.
  int linear(CellIndex c) const { return c.i + spec_.nx * c.j; }
  bool in_range(CellIndex c) const { return c.i >= 0 && c.i < spec_.nx && c.j >= 0 && c.j < spec_.ny; }
  bool is_fluid(CellIndex c) const { return fluid_index_[linear(c)] >= 0; }
  /// Dense fluid numbering, -1 for solid cells.
  int fluid_index(CellIndex c) const { return fluid_index_[linear(c)]; }
  CellIndex fluid_cell(int k) const { return fluid_cells_[k]; }
  std::span<const CellIndex> fluid_cells() const { return fluid_cells_; }

  /// Obstacle tag of a solid cell, Interior for fluid cells.
  BoundaryTag solid_tag(CellIndex c) const { return solid_tag_[linear(c)]; }

  Vec2 center(CellIndex c) const;

  std::span<const Face> faces() const { return faces_; }
  std::span<const Face> interior_faces() const { return {faces_.data(), static_cast<std::size_t>(interior_count_)}; }
  std::span<const Face> boundary_faces() const {
    return {faces_.data() + interior_count_, faces_.size() - static_cast<std::size_t>(interior_count_)};
  }
  /// Indices into faces() touching fluid cell k, in (west, east, south, north) order where present.
  std::span<const int> cell_faces(int k) const {
    return {cell_face_list_.data() + cell_face_offset_[k],
            static_cast<std::size_t>(cell_face_offset_[k + 1] - cell_face_offset_[k])};
  }

 private:
  GridSpec spec_;
  double dx_;
  double dy_;
  std::vector<int> fluid_index_;
  std::vector<BoundaryTag> solid_tag_;
  std::vector<CellIndex> fluid_cells_;
  std::vector<Face> faces_;
  int interior_count_ = 0;
  std::vector<int> cell_face_offset_;
  std::vector<int> cell_face_list_;
};

Mesh build_grid(const GridSpec& spec);

/// Faces of fluid cell K oriented outward from K, paired with the neighboring
/// fluid cell when the face is interior.
std::vector<std::pair<std::optional<CellIndex>, Face>> neighbors(const Mesh& mesh, CellIndex k);

/// Staggered face-normal velocities: u on x-faces, (nx+1) x ny; v on y-faces, nx x (ny+1).
struct FaceVelocity {
  Eigen::ArrayXXd u;
  Eigen::ArrayXXd v;

  static FaceVelocity zeros(int nx, int ny) {
    return {Eigen::ArrayXXd::Zero(nx + 1, ny), Eigen::ArrayXXd::Zero(nx, ny + 1)};
  }
};

/// Velocity through `face` along its outward normal.
double outward_velocity(const FaceVelocity& vel, const Face& face);

}  // namespace chemoflow
