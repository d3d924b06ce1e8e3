#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flava/calibration.hpp"
#include "flava/point_cloud.hpp"
#include "flava/types.hpp"

namespace flava {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Points closer to the image plane than this (in camera depth) are behind it.
inline constexpr double kBehindCameraDepth = 1e-9;
/// Boundary and collinearity tolerance for all inclusion and clipping tests.
inline constexpr double kGeomTolerance = 1e-9;
/// Smallest legal box dimension.
inline constexpr double kMinBoxDimension = 1e-3;

struct BoxSize {
  double length = 1.0;  // along heading
  double width = 1.0;
  double height = 1.0;

  friend bool operator==(const BoxSize&, const BoxSize&) = default;
};

/// Oriented 3D box in the velodyne frame.
///
/// Yaw is counter-clockwise about +z; yaw 0 heads along +x. The center is the
/// geometric center (not the bottom center).
struct Box3D {
  Vec3 center = Vec3::Zero();
  BoxSize size;
  double yaw = 0.0;
  Category category = Category::Car;
  int track_id = 0;

  bool valid() const noexcept;
  /// Throws InvalidBox unless every dimension exceeds kMinBoxDimension, the
  /// yaw is normalized and all fields are finite.
  void validate() const;

  double bottom() const noexcept { return center.z() - size.height / 2.0; }
  double top() const noexcept { return center.z() + size.height / 2.0; }
  double volume() const noexcept { return size.length * size.width * size.height; }

  /// Unit vectors of the heading (body +x) and lateral (body +y) axes.
  Vec2 heading_axis() const noexcept;
  Vec2 lateral_axis() const noexcept;

  friend bool operator==(const Box3D& a, const Box3D& b) noexcept {
    return a.center == b.center && a.size == b.size && a.yaw == b.yaw &&
           a.category == b.category && a.track_id == b.track_id;
  }
};

/// Projection of a point into the image. Depth is the camera-frame forward
/// coordinate and is filled in even when the point lands off-image; u and v
/// are NaN when the point is behind the camera.
struct ImagePoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;

  bool behind_camera() const noexcept { return !(depth > kBehindCameraDepth); }
};

struct Rect2D {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;

  bool valid() const noexcept { return u_min < u_max && v_min < v_max; }
  bool contains(double u, double v) const noexcept {
    return u >= u_min && u <= u_max && v >= v_min && v <= v_max;
  }
};

/// Bird's-eye footprint: four (x, y) vertices, counter-clockwise.
using BevPolygon = std::array<Vec2, 4>;

ImagePoint project_point(const Calibration& calib, const Vec3& p);

struct FrustumSelection {
  std::vector<std::size_t> indices;  // ascending
  /// Depth (min, max) over the selection; empty when nothing was selected.
  std::optional<std::pair<double, double>> depth_range;
};

/// Points in front of the camera whose projection falls inside rect
/// (boundary inclusive). Throws InvalidRect on an inverted rect.
FrustumSelection frustum_select(const Calibration& calib, const PointCloud& cloud,
                                const Rect2D& rect);

/// Indices of points at or behind the image plane.
std::vector<std::size_t> behind_camera_indices(const Calibration& calib, const PointCloud& cloud);

/// Corner order: bottom face counter-clockwise seen from above, starting at
/// the front-right corner (+l/2, -w/2), then the top face in the same order.
std::array<Vec3, 8> box_corners(const Box3D& box);

/// Bottom-face corners projected onto the ground plane, counter-clockwise.
BevPolygon bev_polygon(const Box3D& box);

/// Footprint of a box in the ground plane; used before a box has a height.
struct BevFootprint {
  double x = 0.0;
  double y = 0.0;
  double length = 1.0;
  double width = 1.0;
  double yaw = 0.0;

  friend bool operator==(const BevFootprint&, const BevFootprint&) = default;
};

BevPolygon bev_polygon(const BevFootprint& footprint);

/// Indices of points whose (x, y) lies in the polygon, boundary inclusive.
std::vector<std::size_t> points_in_bev_footprint(const PointCloud& cloud, const BevPolygon& footprint);
std::vector<std::size_t> points_in_bev_footprint(const PointCloud& cloud, const Box3D& box);
/// Footprint test plus bottom <= z <= top.
std::vector<std::size_t> points_in_box(const PointCloud& cloud, const Box3D& box);

/// Signed shoelace area; positive for counter-clockwise vertex order.
double signed_area(std::span<const Vec2> polygon) noexcept;

/// Sutherland-Hodgman clip of convex subject against convex CCW clip polygon.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

/// Area of the intersection of two convex CCW polygons; 0 when disjoint.
double convex_intersection_area(std::span<const Vec2> a, std::span<const Vec2> b);
double convex_intersection_area(const BevPolygon& a, const BevPolygon& b);

}  // namespace flava
