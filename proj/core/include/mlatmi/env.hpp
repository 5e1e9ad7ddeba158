#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mlatmi::env {

using Point2 = Eigen::Vector2d;
using Point3 = Eigen::Vector3d;

// Floor plan extruded to `height`. UEs move at ue_height, anchors hang at
// ref_height.
struct Room {
  std::vector<Point2> boundary;  // simple polygon, either orientation
  double height = 3.0;
  double ue_height = 0.1;
  double ref_height = 2.5;

  // Throws ConfigError when the polygon is degenerate or self-intersecting,
  // or when the heights violate 0 < ue_height < ref_height <= height.
  void validate() const;
  double area() const;
};

Room square_room(double side, double height = 3.0, double ue_height = 0.1,
                 double ref_height = 2.5);

// side x side square minus the notch x notch quadrant at the corner of
// maximal x and y.
Room l_shaped_room(double side, double notch, double height = 3.0,
                   double ue_height = 0.1, double ref_height = 2.5);

bool strictly_inside(const std::vector<Point2>& polygon, const Point2& p);
double distance_to_boundary(const std::vector<Point2>& polygon, const Point2& p);

// Feasible UE positions: centers of the square cells strictly inside the
// room, ordered row-major (y outer, x inner).
class GridMap {
 public:
  GridMap() = default;
  GridMap(double cell_size, double z, Point2 origin, std::vector<Eigen::Vector2i> lattice);

  std::size_t size() const { return cells_.size(); }
  double cell_size() const { return cell_size_; }
  double z() const { return z_; }
  const Point2& cell(std::size_t i) const { return cells_[i]; }
  Point3 position(std::size_t i) const { return {cells_[i].x(), cells_[i].y(), z_}; }
  const std::vector<Point2>& cells() const { return cells_; }

  // Ordinal of the cell whose center is `center` (to within cell_size / 4).
  std::optional<std::size_t> index_of(const Point2& center) const;

 private:
  double cell_size_ = 0.0;
  double z_ = 0.0;
  Point2 origin_ = Point2::Zero();
  std::vector<Point2> cells_;
  std::vector<Eigen::Vector2i> lattice_;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<std::int64_t> lookup_;  // nx_*ny_ entries, -1 = not feasible
};

GridMap build_grid(const Room& room, double cell_size);

struct ReferencePlacement {
  std::string id;
  std::vector<Point3> refs;
  double sensing_range = 7.4;

  std::size_t size() const { return refs.size(); }
};

// Places xy anchors at the room's reference height.
ReferencePlacement make_placement(const Room& room, std::string id,
                                  const std::vector<Point2>& xy, double sensing_range = 7.4);

// True iff the open segment a-b does not touch the room boundary.
// Touching a vertex counts as blocked.
bool line_of_sight(const Room& room, const Point2& a, const Point2& b);

using RefMask = std::uint64_t;
inline constexpr std::size_t kMaxRefs = 64;

struct VisibilityTable {
  std::size_t num_refs = 0;
  std::vector<RefMask> masks;  // bit j set <=> reference j detectable

  std::size_t size() const { return masks.size(); }
  bool visible(std::size_t cell, std::size_t ref) const { return (masks[cell] >> ref) & 1U; }
  int count(std::size_t cell) const;
  std::vector<std::size_t> refs(std::size_t cell) const;
};

// Detectable <=> xy distance <= sensing_range and line of sight.
VisibilityTable visibility(const Room& room, const GridMap& grid, const ReferencePlacement& placement);

struct PlacementRules {
  double min_spacing = 0.5;
  double min_wall_distance = 0.5;
  int min_visible = 4;
};

struct Violation {
  enum class Kind { outside, height, spacing, wall, coverage };
  Kind kind;
  std::string detail;
  std::ptrdiff_t ref_a = -1;
  std::ptrdiff_t ref_b = -1;
  std::ptrdiff_t cell = -1;
};

std::string to_string(Violation::Kind kind);

// Empty result means the placement is valid.
std::vector<Violation> validate_placement(const Room& room, const GridMap& grid,
                                          const ReferencePlacement& placement,
                                          const PlacementRules& rules = {});

}  // namespace mlatmi::env
