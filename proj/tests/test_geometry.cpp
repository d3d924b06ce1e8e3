#include <doctest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "flava/error.hpp"
#include "flava/geometry.hpp"
#include "oracles.hpp"

using namespace flava;

namespace {

oracle::Mat34 to_array34(const Eigen::Matrix<double, 3, 4>& m) {
  oracle::Mat34 a{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) a[i][j] = m(i, j);
  return a;
}

oracle::Mat33 to_array33(const Eigen::Matrix4d& m) {
  oracle::Mat33 a{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a[i][j] = m(i, j);
  return a;
}

oracle::Mat34 to_array_rigid(const Eigen::Matrix4d& m) {
  oracle::Mat34 a{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) a[i][j] = m(i, j);
  return a;
}

Box3D make_box(double x, double y, double z, double l, double w, double h, double yaw) {
  Box3D b;
  b.center = {x, y, z};
  b.size = {l, w, h};
  b.yaw = yaw;
  return b;
}

oracle::Rect to_rect(const Box3D& b) { return {b.center.x(), b.center.y(), b.size.length, b.size.width, b.yaw}; }

}  // namespace

TEST_CASE("projection examples") {
  const ImagePoint p = project_point(Calibration::identity(), {2, 1, 10});
  CHECK(p.u == doctest::Approx(0.2));
  CHECK(p.v == doctest::Approx(0.1));
  CHECK(p.depth == doctest::Approx(10));

  Calibration c = Calibration::identity();
  c.p_rect << 700, 0, 600, 0, 0, 700, 180, 0, 0, 0, 1, 0;
  const ImagePoint q = project_point(c, {0, 0, 10});
  CHECK(q.u == doctest::Approx(600));
  CHECK(q.v == doctest::Approx(180));
  CHECK(q.depth == doctest::Approx(10));

  const ImagePoint behind = project_point(Calibration::identity(), {1, 1, -2});
  CHECK(behind.behind_camera());
  CHECK(std::isnan(behind.u));
  CHECK(behind.depth == doctest::Approx(-2));
  CHECK(project_point(Calibration::identity(), {1, 1, 0}).behind_camera());
}

TEST_CASE("projection of a real calibration matches the matrix-chain oracle") {
  const Calibration calib = fixture::kitti_calibration();
  const auto P = to_array34(calib.p_rect);
  const auto R = to_array33(calib.r_rect);
  const auto T = to_array_rigid(calib.t_velo_cam);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x(fixture::uniform(rng, 2, 80), fixture::uniform(rng, -20, 20), fixture::uniform(rng, -3, 3));
    const ImagePoint got = project_point(calib, x);
    const auto want = oracle::project(P, R, T, x.x(), x.y(), x.z());
    CHECK(std::abs(got.u - want.u) < 1e-6);
    CHECK(std::abs(got.v - want.v) < 1e-6);
    CHECK(std::abs(got.depth - want.depth) < 1e-9);
  }
}

TEST_CASE("frustum selection") {
  const Calibration calib = fixture::kitti_calibration();
  const Rect2D everything{-1e12, -1e12, 1e12, 1e12};

  SUBCASE("full rect selects every forward point") {
    PointCloud cloud;
    for (int i = 0; i < 50; ++i) cloud.points.push_back({static_cast<float>(5 + i), 0.5f, -1.0f, 0.1f});
    const auto sel = frustum_select(calib, cloud, everything);
    CHECK(sel.indices.size() == cloud.size());
    REQUIRE(sel.depth_range);
    CHECK(sel.depth_range->first < sel.depth_range->second);
  }
  SUBCASE("cloud behind the camera selects nothing") {
    PointCloud cloud;
    for (int i = 0; i < 20; ++i) cloud.points.push_back({static_cast<float>(-5 - i), 1.0f, 0.0f, 0.0f});
    const auto sel = frustum_select(calib, cloud, everything);
    CHECK(sel.indices.empty());
    CHECK_FALSE(sel.depth_range);
    CHECK(behind_camera_indices(calib, cloud).size() == cloud.size());
  }
  SUBCASE("identity calibration matches a brute-force filter on a grid") {
    PointCloud cloud;
    for (int i = -10; i <= 10; ++i)
      for (int j = -10; j <= 10; ++j)
        for (const float z : {-1.0f, 0.5f, 1.0f, 2.0f})
          cloud.points.push_back({static_cast<float>(i) * 0.05f, static_cast<float>(j) * 0.05f, z, 0.0f});
    const Rect2D rect{0.1, 0.1, 0.3, 0.3};
    std::vector<std::size_t> want;
    for (std::size_t k = 0; k < cloud.size(); ++k) {
      const auto& p = cloud.points[k];
      if (!(p.z > 1e-9)) continue;
      const double u = double(p.x) / p.z;
      const double v = double(p.y) / p.z;
      if (u >= 0.1 && u <= 0.3 && v >= 0.1 && v <= 0.3) want.push_back(k);
    }
    CHECK(!want.empty());
    CHECK(frustum_select(Calibration::identity(), cloud, rect).indices == want);
  }
  SUBCASE("inverted rect is rejected") {
    CHECK_THROWS_AS(frustum_select(calib, PointCloud{}, Rect2D{10, 0, 5, 10}), Error);
  }
  SUBCASE("selection and behind-camera set partition the cloud") {
    std::mt19937_64 rng(99);
    const PointCloud cloud = fixture::random_cloud(rng, 3000);
    const auto sel = frustum_select(calib, cloud, everything);
    const auto behind = behind_camera_indices(calib, cloud);
    std::set<std::size_t> all(sel.indices.begin(), sel.indices.end());
    for (const auto i : behind) CHECK(all.insert(i).second);
    CHECK(all.size() == cloud.size());
  }
}

TEST_CASE("box corners") {
  const Box3D cube = make_box(0, 0, 0, 1, 1, 1, 0);
  const auto c = box_corners(cube);
  const std::array<Vec3, 8> want = {Vec3(0.5, -0.5, -0.5), Vec3(0.5, 0.5, -0.5), Vec3(-0.5, 0.5, -0.5),
                                    Vec3(-0.5, -0.5, -0.5), Vec3(0.5, -0.5, 0.5),  Vec3(0.5, 0.5, 0.5),
                                    Vec3(-0.5, 0.5, 0.5),   Vec3(-0.5, -0.5, 0.5)};
  for (std::size_t i = 0; i < 8; ++i) CHECK((c[i] - want[i]).norm() < 1e-15);

  const auto q = box_corners(make_box(0, 0, 0, 1, 1, 1, kPi / 2));
  for (std::size_t i = 0; i < 8; ++i) {
    // Quarter turn: (x, y) -> (-y, x).
    CHECK(std::abs(q[i].x() + want[i].y()) < 1e-12);
    CHECK(std::abs(q[i].y() - want[i].x()) < 1e-12);
    CHECK(q[i].z() == want[i].z());
  }

  std::mt19937_64 rng(4);
  for (int n = 0; n < 500; ++n) {
    const Box3D b = fixture::random_box(rng);
    const auto k = box_corners(b);
    Vec3 mean = Vec3::Zero();
    for (const auto& p : k) mean += p;
    CHECK(((mean / 8.0) - b.center).norm() < 1e-12);
    const Vec3 e_len = k[0] - k[3];
    const Vec3 e_wid = k[1] - k[0];
    const Vec3 e_hgt = k[4] - k[0];
    CHECK(std::abs(e_len.norm() - b.size.length) < 1e-12);
    CHECK(std::abs(e_wid.norm() - b.size.width) < 1e-12);
    CHECK(std::abs(e_hgt.norm() - b.size.height) < 1e-12);
    CHECK(std::abs(e_len.dot(e_wid)) < 1e-9);
    CHECK(std::abs(e_len.dot(e_hgt)) < 1e-9);
    CHECK(std::abs(e_wid.dot(e_hgt)) < 1e-9);
  }
}

TEST_CASE("bird-view polygon is counter-clockwise with area l*w") {
  const auto sq = bev_polygon(make_box(0, 0, 0, 1, 1, 1, 0));
  CHECK(signed_area(sq) == doctest::Approx(1.0));
  const auto diamond = bev_polygon(make_box(0, 0, 0, 1, 1, 1, kPi / 4));
  for (const auto& v : diamond) CHECK(v.norm() == doctest::Approx(std::sqrt(0.5)));
  CHECK(std::abs(diamond[0].y()) < 1e-12);  // front-right corner lands on the +x axis

  std::mt19937_64 rng(8);
  for (int n = 0; n < 500; ++n) {
    const Box3D b = fixture::random_box(rng);
    const double area = signed_area(bev_polygon(b));
    CHECK(area > 0);
    CHECK(std::abs(area - b.size.length * b.size.width) < 1e-9);
  }
}

TEST_CASE("point-in-footprint and point-in-box match the unrotate oracle") {
  const Box3D b = make_box(1, 2, 0.5, 4, 2, 1.5, 0.7);
  PointCloud probe;
  probe.points.push_back({1, 2, 100, 0});
  probe.points.push_back({1 + 40, 2, 0.5, 0});
  probe.points.push_back({1, 2, 0.5 + 1.5f, 0});
  CHECK(points_in_bev_footprint(probe, b) == std::vector<std::size_t>{0, 2});
  CHECK(points_in_box(probe, b).empty());
  probe.points[0].z = 0.5f;
  CHECK(points_in_box(probe, b) == std::vector<std::size_t>{0});

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Box3D box = fixture::random_box(rng);
    box.center = {fixture::uniform(rng, -2, 2), fixture::uniform(rng, -2, 2), fixture::uniform(rng, -1, 1)};
    const PointCloud cloud = fixture::random_cloud(rng, 1000, 5.0);
    std::vector<std::size_t> bev;
    std::vector<std::size_t> vol;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      if (!oracle::inside(to_rect(box), p.x, p.y)) continue;
      bev.push_back(i);
      if (p.z >= box.bottom() - 1e-9 && p.z <= box.top() + 1e-9) vol.push_back(i);
    }
    CHECK(points_in_bev_footprint(cloud, box) == bev);
    CHECK(points_in_box(cloud, box) == vol);
  }
}

TEST_CASE("convex intersection area") {
  const auto unit = bev_polygon(make_box(0, 0, 0, 1, 1, 1, 0));
  CHECK(convex_intersection_area(unit, unit) == doctest::Approx(1.0));
  CHECK(convex_intersection_area(unit, bev_polygon(make_box(0.5, 0, 0, 1, 1, 1, 0))) == doctest::Approx(0.5));
  CHECK(convex_intersection_area(unit, bev_polygon(make_box(5, 0, 0, 1, 1, 1, 0))) == 0.0);
  // Shared edge only.
  CHECK(convex_intersection_area(unit, bev_polygon(make_box(1, 0, 0, 1, 1, 1, 0))) == 0.0);

  const auto rotated = bev_polygon(make_box(0, 0, 0, 1, 1, 1, kPi / 4));
  const double octagon = 2 * (std::sqrt(2.0) - 1);
  CHECK(std::abs(convex_intersection_area(unit, rotated) - octagon) < 1e-12);
  const auto raster = oracle::raster_bev({0, 0, 1, 1, 0}, {0, 0, 1, 1, kPi / 4}, 2000);
  CHECK(std::abs(raster.intersection - octagon) / octagon < 1e-3);

  std::mt19937_64 rng(31);
  for (int n = 0; n < 500; ++n) {
    const Box3D a = fixture::random_box(rng);
    Box3D b = fixture::random_box(rng);
    b.center.head<2>() = a.center.head<2>() + Vec2(fixture::uniform(rng, -3, 3), fixture::uniform(rng, -3, 3));
    const auto pa = bev_polygon(a);
    const auto pb = bev_polygon(b);
    const double ab = convex_intersection_area(pa, pb);
    const double ba = convex_intersection_area(pb, pa);
    CHECK(std::abs(ab - ba) <= 1e-9);
    CHECK(ab >= 0.0);
    CHECK(ab <= std::min(signed_area(pa), signed_area(pb)) + 1e-9);

    // One rigid motion applied to both.
    const double t = fixture::uniform(rng, -kPi, kPi);
    const Vec2 shift(fixture::uniform(rng, -50, 50), fixture::uniform(rng, -50, 50));
    auto move = [&](Box3D box) {
      const Eigen::Rotation2Dd rot(t);
      box.center.head<2>() = rot * box.center.head<2>() + shift;
      box.yaw = normalize_angle(box.yaw + t);
      return box;
    };
    const double moved = convex_intersection_area(bev_polygon(move(a)), bev_polygon(move(b)));
    CHECK(std::abs(moved - ab) <= 1e-6 * std::max(1.0, ab));
  }
}
