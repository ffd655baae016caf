#include "chemoflow/mesh.hpp"

#include <array>
#include <stdexcept>

namespace chemoflow {

std::string to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::Interior: return "interior";
    case BoundaryTag::Bottom: return "gamma1";
    case BoundaryTag::Outlet: return "gamma2";
    case BoundaryTag::Top: return "gamma3";
    case BoundaryTag::Inlet: return "gamma4";
    case BoundaryTag::Obstacle1: return "gamma5";
    case BoundaryTag::Obstacle2: return "gamma6";
  }
  return "unknown";
}

Obstacle Obstacle::rectangle(Vec2 lo, Vec2 hi, BoundaryTag tag) {
  Obstacle o;
  o.shape = Shape::Rectangle;
  o.lo = lo;
  o.hi = hi;
  o.tag = tag;
  return o;
}

Obstacle Obstacle::circle(Vec2 center, double radius, BoundaryTag tag) {
  Obstacle o;
  o.shape = Shape::Circle;
  o.center = center;
  o.radius = radius;
  o.tag = tag;
  return o;
}

bool Obstacle::contains(const Vec2& p) const {
  if (shape == Shape::Rectangle) {
    return p.x() > lo.x() && p.x() < hi.x() && p.y() > lo.y() && p.y() < hi.y();
  }
  return (p - center).squaredNorm() < radius * radius;
}

Face Face::flipped() const {
  if (!neighbor) throw std::logic_error("boundary faces have no neighbor side");
  Face f = *this;
  f.owner = *neighbor;
  f.neighbor = owner;
  f.owner_fluid = neighbor_fluid;
  f.neighbor_fluid = owner_fluid;
  f.normal = -normal;
  return f;
}

namespace {

void validate(const GridSpec& s) {
  if (s.nx < 1 || s.ny < 1) throw std::invalid_argument("grid: cell counts must be positive");
  if (!(s.lx > 0.0) || !(s.ly > 0.0)) throw std::invalid_argument("grid: extents must be positive");
  const Vec2 top = s.origin + Vec2(s.lx, s.ly);
  for (const auto& o : s.obstacles) {
    if (!is_obstacle(o.tag)) throw std::invalid_argument("grid: obstacle tag must be gamma5 or gamma6");
    Vec2 lo, hi;
    if (o.shape == Obstacle::Shape::Rectangle) {
      if (!(o.hi.x() > o.lo.x()) || !(o.hi.y() > o.lo.y()))
        throw std::invalid_argument("grid: rectangle obstacle must have positive extent");
      lo = o.lo;
      hi = o.hi;
    } else {
      if (!(o.radius > 0.0)) throw std::invalid_argument("grid: circle obstacle must have positive radius");
      lo = o.center.array() - o.radius;
      hi = o.center.array() + o.radius;
    }
    if ((lo.array() < s.origin.array()).any() || (hi.array() > top.array()).any())
      throw std::invalid_argument("grid: obstacle lies outside the domain");
  }
}

}  // namespace

Mesh::Mesh(GridSpec spec) : spec_(std::move(spec)) {
  validate(spec_);
  dx_ = spec_.lx / spec_.nx;
  dy_ = spec_.ly / spec_.ny;

  const int n = cell_count();
  fluid_index_.assign(n, -1);
  solid_tag_.assign(n, BoundaryTag::Interior);
  for (int j = 0; j < spec_.ny; ++j) {
    for (int i = 0; i < spec_.nx; ++i) {
      const CellIndex c{i, j};
      const Vec2 p = center(c);
      for (const auto& o : spec_.obstacles) {
        if (o.contains(p)) {
          solid_tag_[linear(c)] = o.tag;
          break;
        }
      }
      if (solid_tag_[linear(c)] == BoundaryTag::Interior) {
        fluid_index_[linear(c)] = static_cast<int>(fluid_cells_.size());
        fluid_cells_.push_back(c);
      }
    }
  }

  // Per-cell slots: west, east, south, north.
  std::vector<std::array<int, 4>> slots(fluid_cells_.size(), {-1, -1, -1, -1});
  std::vector<Face> interior;
  std::vector<Face> boundary;
  struct Pending {
    bool is_interior;
    int index;
    int cell;
    int slot;
  };
  std::vector<Pending> pending;

  auto add = [&](Face f, int owner_slot, int neighbor_slot) {
    const bool inner = f.neighbor.has_value();
    auto& dst = inner ? interior : boundary;
    const int idx = static_cast<int>(dst.size());
    pending.push_back({inner, idx, f.owner_fluid, owner_slot});
    if (inner) pending.push_back({true, idx, f.neighbor_fluid, neighbor_slot});
    dst.push_back(std::move(f));
  };

  auto make = [&](CellIndex owner, std::optional<CellIndex> nb, BoundaryTag tag, Axis axis, Vec2 normal) {
    Face f;
    f.owner = owner;
    f.neighbor = nb;
    f.tag = tag;
    f.axis = axis;
    f.measure = axis == Axis::X ? dy_ : dx_;
    const double h = axis == Axis::X ? dx_ : dy_;
    f.distance = nb ? h : 0.5 * h;
    f.normal = normal;
    f.owner_fluid = fluid_index(owner);
    f.neighbor_fluid = nb ? fluid_index(*nb) : -1;
    return f;
  };

  // x-faces: between (i-1, j) and (i, j).
  for (int j = 0; j < spec_.ny; ++j) {
    for (int i = 0; i <= spec_.nx; ++i) {
      const CellIndex left{i - 1, j};
      const CellIndex right{i, j};
      const bool lf = i > 0 && is_fluid(left);
      const bool rf = i < spec_.nx && is_fluid(right);
      if (lf && rf) {
        add(make(left, right, BoundaryTag::Interior, Axis::X, Vec2(1, 0)), 1, 0);
      } else if (lf) {
        const BoundaryTag t = i == spec_.nx ? BoundaryTag::Outlet : solid_tag(right);
        add(make(left, std::nullopt, t, Axis::X, Vec2(1, 0)), 1, -1);
      } else if (rf) {
        const BoundaryTag t = i == 0 ? BoundaryTag::Inlet : solid_tag(left);
        add(make(right, std::nullopt, t, Axis::X, Vec2(-1, 0)), 0, -1);
      }
    }
  }
  // y-faces: between (i, j-1) and (i, j).
  for (int j = 0; j <= spec_.ny; ++j) {
    for (int i = 0; i < spec_.nx; ++i) {
      const CellIndex below{i, j - 1};
      const CellIndex above{i, j};
      const bool bf = j > 0 && is_fluid(below);
      const bool af = j < spec_.ny && is_fluid(above);
      if (bf && af) {
        add(make(below, above, BoundaryTag::Interior, Axis::Y, Vec2(0, 1)), 3, 2);
      } else if (bf) {
        const BoundaryTag t = j == spec_.ny ? BoundaryTag::Top : solid_tag(above);
        add(make(below, std::nullopt, t, Axis::Y, Vec2(0, 1)), 3, -1);
      } else if (af) {
        const BoundaryTag t = j == 0 ? BoundaryTag::Bottom : solid_tag(below);
        add(make(above, std::nullopt, t, Axis::Y, Vec2(0, -1)), 2, -1);
      }
    }
  }

  interior_count_ = static_cast<int>(interior.size());
  faces_ = std::move(interior);
  faces_.insert(faces_.end(), boundary.begin(), boundary.end());

  for (const auto& p : pending) {
    const int global = p.is_interior ? p.index : interior_count_ + p.index;
    slots[p.cell][p.slot] = global;
  }
  cell_face_offset_.assign(fluid_cells_.size() + 1, 0);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    for (int s : slots[k]) {
      if (s >= 0) cell_face_list_.push_back(s);
    }
    cell_face_offset_[k + 1] = static_cast<int>(cell_face_list_.size());
  }
}

Vec2 Mesh::center(CellIndex c) const {
  return spec_.origin + Vec2((c.i + 0.5) * dx_, (c.j + 0.5) * dy_);
}

Mesh build_grid(const GridSpec& spec) { return Mesh(spec); }

std::vector<std::pair<std::optional<CellIndex>, Face>> neighbors(const Mesh& mesh, CellIndex k) {
  if (!mesh.in_range(k)) throw std::out_of_range("neighbors: cell index out of range");
  if (!mesh.is_fluid(k)) throw std::invalid_argument("neighbors: cell is solid");
  const int kf = mesh.fluid_index(k);
  std::vector<std::pair<std::optional<CellIndex>, Face>> out;
  for (int fi : mesh.cell_faces(kf)) {
    const Face& f = mesh.faces()[fi];
    if (f.is_boundary()) {
      out.emplace_back(std::nullopt, f);
    } else if (f.owner_fluid == kf) {
      out.emplace_back(f.neighbor, f);
    } else {
      out.emplace_back(f.owner, f.flipped());
    }
  }
  return out;
}

double outward_velocity(const FaceVelocity& vel, const Face& face) {
  // Face normals are axis aligned; the MAC slot is on the +normal side of the owner
  // when the normal is positive, on the owner's own low side otherwise.
  const CellIndex c = face.owner;
  if (face.axis == Axis::X) {
    return face.normal.x() > 0 ? vel.u(c.i + 1, c.j) : -vel.u(c.i, c.j);
  }
  return face.normal.y() > 0 ? vel.v(c.i, c.j + 1) : -vel.v(c.i, c.j);
}

}  // namespace chemoflow
