#include "flava/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flava/error.hpp"

namespace flava {
namespace {

double cross(const Vec2& a, const Vec2& b) noexcept { return a.x() * b.y() - a.y() * b.x(); }

// Signed distance of p from the directed line through a->b; positive on the left.
double side_of(const Vec2& a, const Vec2& b, const Vec2& p) noexcept {
  const Vec2 e = b - a;
  const double len = e.norm();
  if (len <= kGeomTolerance) return 0.0;
  return cross(e, p - a) / len;
}

void drop_duplicate_vertices(std::vector<Vec2>& poly) {
  if (poly.size() < 2) return;
  std::vector<Vec2> out;
  out.reserve(poly.size());
  for (const Vec2& v : poly) {
    if (out.empty() || (v - out.back()).norm() > kGeomTolerance) out.push_back(v);
  }
  while (out.size() > 1 && (out.front() - out.back()).norm() <= kGeomTolerance) out.pop_back();
  poly = std::move(out);
}

bool inside_convex(const BevPolygon& poly, double x, double y) noexcept {
  const Vec2 p(x, y);
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (side_of(poly[i], poly[(i + 1) % poly.size()], p) < -kGeomTolerance) return false;
  }
  return true;
}

BevPolygon footprint_polygon(double cx, double cy, double length, double width, double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double hl = length / 2.0;
  const double hw = width / 2.0;
  const std::array<Vec2, 4> body = {Vec2(hl, -hw), Vec2(hl, hw), Vec2(-hl, hw), Vec2(-hl, -hw)};
  BevPolygon out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = Vec2(cx + c * body[i].x() - s * body[i].y(), cy + s * body[i].x() + c * body[i].y());
  }
  return out;
}

}  // namespace

bool Box3D::valid() const noexcept {
  return center.allFinite() && std::isfinite(size.length) && std::isfinite(size.width) &&
         std::isfinite(size.height) && size.length > kMinBoxDimension &&
         size.width > kMinBoxDimension && size.height > kMinBoxDimension && yaw >= -kPi &&
         yaw < kPi && track_id >= 0;
}

void Box3D::validate() const {
  if (!valid()) {
    throw Error(ErrorCode::InvalidBox, "box " + std::to_string(track_id) +
                                           " violates size/yaw/finiteness invariants");
  }
}

Vec2 Box3D::heading_axis() const noexcept { return {std::cos(yaw), std::sin(yaw)}; }
Vec2 Box3D::lateral_axis() const noexcept { return {-std::sin(yaw), std::cos(yaw)}; }

ImagePoint project_point(const Calibration& calib, const Vec3& p) {
  const Eigen::Vector3d y = calib.projection() * p.homogeneous();
  ImagePoint out;
  out.depth = y.z();
  if (out.behind_camera()) {
    out.u = out.v = std::numeric_limits<double>::quiet_NaN();
  } else {
    out.u = y.x() / y.z();
    out.v = y.y() / y.z();
  }
  return out;
}

FrustumSelection frustum_select(const Calibration& calib, const PointCloud& cloud,
                                const Rect2D& rect) {
  if (!rect.valid()) {
    throw Error(ErrorCode::InvalidRect, "frustum rect must satisfy u_min < u_max and v_min < v_max");
  }
  const Matrix34 m = calib.projection();
  FrustumSelection sel;
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = -dmin;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const LidarPoint& pt = cloud.points[i];
    const Eigen::Vector4d h(pt.x, pt.y, pt.z, 1.0);
    const Eigen::Vector3d y = m * h;
    if (!(y.z() > kBehindCameraDepth)) continue;
    if (!rect.contains(y.x() / y.z(), y.y() / y.z())) continue;
    sel.indices.push_back(i);
    dmin = std::min(dmin, y.z());
    dmax = std::max(dmax, y.z());
  }
  if (!sel.indices.empty()) sel.depth_range = std::make_pair(dmin, dmax);
  return sel;
}

std::vector<std::size_t> behind_camera_indices(const Calibration& calib, const PointCloud& cloud) {
  const Eigen::RowVector4d depth_row = calib.projection().row(2);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const LidarPoint& pt = cloud.points[i];
    const double depth = depth_row.dot(Eigen::Vector4d(pt.x, pt.y, pt.z, 1.0));
    if (!(depth > kBehindCameraDepth)) out.push_back(i);
  }
  return out;
}

std::array<Vec3, 8> box_corners(const Box3D& box) {
  const BevPolygon bev = bev_polygon(box);
  std::array<Vec3, 8> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = Vec3(bev[i].x(), bev[i].y(), box.bottom());
    out[i + 4] = Vec3(bev[i].x(), bev[i].y(), box.top());
  }
  return out;
}

BevPolygon bev_polygon(const Box3D& box) {
  return footprint_polygon(box.center.x(), box.center.y(), box.size.length, box.size.width, box.yaw);
}

BevPolygon bev_polygon(const BevFootprint& f) {
  return footprint_polygon(f.x, f.y, f.length, f.width, f.yaw);
}

std::vector<std::size_t> points_in_bev_footprint(const PointCloud& cloud, const BevPolygon& footprint) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (inside_convex(footprint, cloud.points[i].x, cloud.points[i].y)) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> points_in_bev_footprint(const PointCloud& cloud, const Box3D& box) {
  return points_in_bev_footprint(cloud, bev_polygon(box));
}

std::vector<std::size_t> points_in_box(const PointCloud& cloud, const Box3D& box) {
  const BevPolygon footprint = bev_polygon(box);
  const double lo = box.bottom() - kGeomTolerance;
  const double hi = box.top() + kGeomTolerance;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const LidarPoint& p = cloud.points[i];
    if (p.z >= lo && p.z <= hi && inside_convex(footprint, p.x, p.y)) out.push_back(i);
  }
  return out;
}

double signed_area(std::span<const Vec2> polygon) noexcept {
  if (polygon.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
    twice += cross(polygon[j], polygon[i]);
  }
  return twice / 2.0;
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> out(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    const std::vector<Vec2> input = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Vec2& prev = input[(i + input.size() - 1) % input.size()];
      const Vec2& cur = input[i];
      const double dp = side_of(a, b, prev);
      const double dc = side_of(a, b, cur);
      const bool prev_in = dp >= -kGeomTolerance;
      const bool cur_in = dc >= -kGeomTolerance;
      if (cur_in != prev_in) {
        const double t = dp / (dp - dc);
        out.push_back(prev + t * (cur - prev));
      }
      if (cur_in) out.push_back(cur);
    }
    drop_duplicate_vertices(out);
  }
  if (out.size() < 3) out.clear();
  return out;
}

double convex_intersection_area(std::span<const Vec2> a, std::span<const Vec2> b) {
  const std::vector<Vec2> overlap = clip_convex(a, b);
  const double area = signed_area(overlap);
  return area > kGeomTolerance ? area : 0.0;
}

double convex_intersection_area(const BevPolygon& a, const BevPolygon& b) {
  return convex_intersection_area(std::span<const Vec2>(a), std::span<const Vec2>(b));
}

}  // namespace flava
