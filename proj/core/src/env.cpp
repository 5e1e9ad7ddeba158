#include "mlatmi/env.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "mlatmi/errors.hpp"

namespace mlatmi::env {

namespace {

constexpr double kGeomEps = 1e-12;

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

int orientation(const Point2& o, const Point2& a, const Point2& b) {
  const double c = cross(o, a, b);
  if (c > kGeomEps) return 1;
  if (c < -kGeomEps) return -1;
  return 0;
}

bool on_segment(const Point2& p, const Point2& a, const Point2& b) {
  return p.x() >= std::min(a.x(), b.x()) - kGeomEps && p.x() <= std::max(a.x(), b.x()) + kGeomEps &&
         p.y() >= std::min(a.y(), b.y()) - kGeomEps && p.y() <= std::max(a.y(), b.y()) + kGeomEps;
}

// Closed segments: touching endpoints or collinear overlap count.
bool segments_touch(const Point2& p1, const Point2& p2, const Point2& q1, const Point2& q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(q1, p1, p2)) return true;
  if (o2 == 0 && on_segment(q2, p1, p2)) return true;
  if (o3 == 0 && on_segment(p1, q1, q2)) return true;
  if (o4 == 0 && on_segment(p2, q1, q2)) return true;
  return false;
}

double point_segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  const Point2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double signed_area(const std::vector<Point2>& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % poly.size()];
    s += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * s;
}

}  // namespace

void Room::validate() const {
  const std::size_t n = boundary.size();
  if (n < 3) throw ConfigError("room boundary needs at least 3 vertices");
  for (const auto& v : boundary) {
    if (!v.allFinite()) throw ConfigError("room boundary has a non-finite vertex");
  }
  if (std::abs(signed_area(boundary)) <= kGeomEps) throw ConfigError("room boundary has zero area");
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = boundary[i];
    const Point2& b = boundary[(i + 1) % n];
    if ((b - a).norm() <= kGeomEps) throw ConfigError("room boundary has a repeated vertex");
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      const Point2& c = boundary[j];
      const Point2& d = boundary[(j + 1) % n];
      if (segments_touch(a, b, c, d)) {
        std::ostringstream msg;
        msg << "room boundary is not simple: edges " << i << " and " << j << " intersect";
        throw ConfigError(msg.str());
      }
    }
  }
  if (!(ue_height > 0.0 && ue_height < ref_height && ref_height <= height)) {
    throw ConfigError("room heights must satisfy 0 < ue_height < ref_height <= height");
  }
}

double Room::area() const { return std::abs(signed_area(boundary)); }

Room square_room(double side, double height, double ue_height, double ref_height) {
  Room r;
  r.boundary = {{0.0, 0.0}, {side, 0.0}, {side, side}, {0.0, side}};
  r.height = height;
  r.ue_height = ue_height;
  r.ref_height = ref_height;
  return r;
}

Room l_shaped_room(double side, double notch, double height, double ue_height, double ref_height) {
  if (!(notch > 0.0 && notch < side)) throw ConfigError("L-shape notch must lie in (0, side)");
  const double k = side - notch;
  Room r;
  r.boundary = {{0.0, 0.0}, {side, 0.0}, {side, k}, {k, k}, {k, side}, {0.0, side}};
  r.height = height;
  r.ue_height = ue_height;
  r.ref_height = ref_height;
  return r;
}

double distance_to_boundary(const std::vector<Point2>& polygon, const Point2& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    best = std::min(best, point_segment_distance(p, polygon[i], polygon[(i + 1) % polygon.size()]));
  }
  return best;
}

bool strictly_inside(const std::vector<Point2>& polygon, const Point2& p) {
  if (distance_to_boundary(polygon, p) <= kGeomEps) return false;
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = polygon[i];
    const Point2& b = polygon[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

GridMap::GridMap(double cell_size, double z, Point2 origin, std::vector<Eigen::Vector2i> lattice)
    : cell_size_(cell_size), z_(z), origin_(std::move(origin)), lattice_(std::move(lattice)) {
  cells_.reserve(lattice_.size());
  for (const auto& ij : lattice_) {
    cells_.emplace_back(origin_.x() + (ij.x() + 0.5) * cell_size_, origin_.y() + (ij.y() + 0.5) * cell_size_);
    nx_ = std::max(nx_, ij.x() + 1);
    ny_ = std::max(ny_, ij.y() + 1);
  }
  lookup_.assign(static_cast<std::size_t>(nx_) * ny_, -1);
  for (std::size_t i = 0; i < lattice_.size(); ++i) {
    lookup_[static_cast<std::size_t>(lattice_[i].y()) * nx_ + lattice_[i].x()] = static_cast<std::int64_t>(i);
  }
}

std::optional<std::size_t> GridMap::index_of(const Point2& center) const {
  if (cells_.empty()) return std::nullopt;
  const double fx = (center.x() - origin_.x()) / cell_size_ - 0.5;
  const double fy = (center.y() - origin_.y()) / cell_size_ - 0.5;
  const double ix = std::round(fx);
  const double iy = std::round(fy);
  if (std::abs(fx - ix) > 0.25 || std::abs(fy - iy) > 0.25) return std::nullopt;
  if (ix < 0 || iy < 0 || ix >= nx_ || iy >= ny_) return std::nullopt;
  const std::int64_t k = lookup_[static_cast<std::size_t>(iy) * nx_ + static_cast<std::size_t>(ix)];
  if (k < 0) return std::nullopt;
  return static_cast<std::size_t>(k);
}

GridMap build_grid(const Room& room, double cell_size) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ConfigError("cell_size must be positive");
  room.validate();
  Point2 lo = room.boundary.front();
  Point2 hi = lo;
  for (const auto& v : room.boundary) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const int nx = static_cast<int>(std::ceil((hi.x() - lo.x()) / cell_size - 1e-9));
  const int ny = static_cast<int>(std::ceil((hi.y() - lo.y()) / cell_size - 1e-9));
  std::vector<Eigen::Vector2i> lattice;
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const Point2 c(lo.x() + (ix + 0.5) * cell_size, lo.y() + (iy + 0.5) * cell_size);
      if (strictly_inside(room.boundary, c)) lattice.emplace_back(ix, iy);
    }
  }
  if (lattice.empty()) throw ConfigError("empty grid: room is smaller than one cell");
  return GridMap(cell_size, room.ue_height, lo, std::move(lattice));
}

ReferencePlacement make_placement(const Room& room, std::string id, const std::vector<Point2>& xy,
                                  double sensing_range) {
  ReferencePlacement p;
  p.id = std::move(id);
  p.sensing_range = sensing_range;
  for (const auto& v : xy) p.refs.emplace_back(v.x(), v.y(), room.ref_height);
  return p;
}

bool line_of_sight(const Room& room, const Point2& a, const Point2& b) {
  const auto& poly = room.boundary;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (segments_touch(a, b, poly[i], poly[(i + 1) % poly.size()])) return false;
  }
  return true;
}

int VisibilityTable::count(std::size_t cell) const { return std::popcount(masks[cell]); }

std::vector<std::size_t> VisibilityTable::refs(std::size_t cell) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < num_refs; ++j) {
    if (visible(cell, j)) out.push_back(j);
  }
  return out;
}

VisibilityTable visibility(const Room& room, const GridMap& grid, const ReferencePlacement& placement) {
  if (placement.size() > kMaxRefs) throw ConfigError("at most 64 references are supported");
  VisibilityTable vis;
  vis.num_refs = placement.size();
  vis.masks.assign(grid.size(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Point2& q = grid.cell(i);
    RefMask mask = 0;
    for (std::size_t j = 0; j < placement.size(); ++j) {
      const Point2 p = placement.refs[j].head<2>();
      if ((q - p).norm() <= placement.sensing_range && line_of_sight(room, q, p)) {
        mask |= RefMask{1} << j;
      }
    }
    vis.masks[i] = mask;
  }
  return vis;
}

std::string to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::outside: return "outside";
    case Violation::Kind::height: return "height";
    case Violation::Kind::spacing: return "spacing";
    case Violation::Kind::wall: return "wall";
    case Violation::Kind::coverage: return "coverage";
  }
  return "unknown";
}

std::vector<Violation> validate_placement(const Room& room, const GridMap& grid,
                                          const ReferencePlacement& placement,
                                          const PlacementRules& rules) {
  std::vector<Violation> out;
  const auto& refs = placement.refs;
  bool geometry_ok = true;
  for (std::size_t j = 0; j < refs.size(); ++j) {
    const Point2 p = refs[j].head<2>();
    if (!strictly_inside(room.boundary, p)) {
      std::ostringstream msg;
      msg << "reference " << j << " at (" << p.x() << ", " << p.y() << ") is outside the room";
      out.push_back({Violation::Kind::outside, msg.str(), static_cast<std::ptrdiff_t>(j)});
      geometry_ok = false;
      continue;
    }
    if (std::abs(refs[j].z() - room.ref_height) > 1e-9) {
      std::ostringstream msg;
      msg << "reference " << j << " height " << refs[j].z() << " differs from ref_height " << room.ref_height;
      out.push_back({Violation::Kind::height, msg.str(), static_cast<std::ptrdiff_t>(j)});
    }
    const double wall = distance_to_boundary(room.boundary, p);
    if (wall < rules.min_wall_distance - kGeomEps) {
      std::ostringstream msg;
      msg << "reference " << j << " is " << wall << " m from the nearest wall";
      out.push_back({Violation::Kind::wall, msg.str(), static_cast<std::ptrdiff_t>(j)});
    }
  }
  for (std::size_t a = 0; a < refs.size(); ++a) {
    for (std::size_t b = a + 1; b < refs.size(); ++b) {
      const double d = (refs[a].head<2>() - refs[b].head<2>()).norm();
      if (d < rules.min_spacing - kGeomEps) {
        std::ostringstream msg;
        msg << "references " << a << " and " << b << " are " << d << " m apart";
        out.push_back({Violation::Kind::spacing, msg.str(), static_cast<std::ptrdiff_t>(a),
                       static_cast<std::ptrdiff_t>(b)});
      }
    }
  }
  if (geometry_ok && rules.min_visible > 0) {
    const VisibilityTable vis = visibility(room, grid, placement);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (vis.count(i) < rules.min_visible) {
        std::ostringstream msg;
        msg << "cell " << i << " sees " << vis.count(i) << " references, needs " << rules.min_visible;
        out.push_back({Violation::Kind::coverage, msg.str(), -1, -1, static_cast<std::ptrdiff_t>(i)});
      }
    }
  }
  return out;
}

}  // namespace mlatmi::env
