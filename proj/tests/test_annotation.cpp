#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "flava/annotation.hpp"
#include "flava/error.hpp"
#include "oracles.hpp"

using namespace flava;

namespace {

SequenceDescriptor memory_sequence(int frames = 5) {
  SequenceDescriptor seq;
  seq.id = "mem";
  seq.calibration = Calibration::canonical();
  for (int i = 0; i < frames; ++i) seq.frames.push_back({i, fmt::format("{:06d}.bin", i), {}});
  return seq;
}

AnnotationSession::Clock counting_clock() {
  auto t = std::make_shared<double>(100.0);
  return [t] { return *t += 1.0; };
}

PointCloud column(std::initializer_list<float> zs, float x = 0, float y = 0) {
  PointCloud c;
  for (const float z : zs) c.points.push_back({x, y, z, 0});
  return c;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

Box3D make_box(double x, double y, double z, double l, double w, double h, double yaw) {
  Box3D b;
  b.center = {x, y, z};
  b.size = {l, w, h};
  b.yaw = yaw;
  return b;
}

// Axis-aligned face move in the box's own frame, then rotation back about the
// original center.
Box3D rotate_back_oracle(const Box3D& box, const ViewEdit& edit) {
  double x0 = -box.size.length / 2, x1 = box.size.length / 2;
  double y0 = -box.size.width / 2, y1 = box.size.width / 2;
  double z0 = box.center.z() - box.size.height / 2, z1 = box.center.z() + box.size.height / 2;
  const bool front = edit.view == View::Front;
  if (const auto* m = std::get_if<EdgeMove>(&edit.change)) {
    switch (m->edge) {
      case ViewEdge::Top: z1 += m->delta; break;
      case ViewEdge::Bottom: z0 -= m->delta; break;
      case ViewEdge::Right: (front ? y1 : x1) += m->delta; break;
      case ViewEdge::Left: (front ? y0 : x0) -= m->delta; break;
    }
  } else {
    const auto& s = std::get<ViewShift>(edit.change);
    if (front) {
      y0 += s.horizontal;
      y1 += s.horizontal;
    } else {
      x0 += s.horizontal;
      x1 += s.horizontal;
    }
    z0 += s.vertical;
    z1 += s.vertical;
  }
  const double bx = (x0 + x1) / 2;
  const double by = (y0 + y1) / 2;
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  Box3D out = box;
  out.center = {box.center.x() + c * bx - s * by, box.center.y() + s * bx + c * by, (z0 + z1) / 2};
  out.size = {x1 - x0, y1 - y0, z1 - z0};
  return out;
}

ViewEdit random_edit(std::mt19937_64& rng) {
  ViewEdit e;
  e.view = fixture::uniform_int(rng, 0, 1) ? View::Front : View::Side;
  if (fixture::uniform_int(rng, 0, 4) == 0) {
    e.change = ViewShift{fixture::uniform(rng, -2, 2), fixture::uniform(rng, -1, 1)};
  } else {
    e.change = EdgeMove{static_cast<ViewEdge>(fixture::uniform_int(rng, 0, 3)), fixture::uniform(rng, -0.3, 0.5)};
  }
  return e;
}

}  // namespace

TEST_CASE("anchor table") {
  const AnchorTable t = AnchorTable::defaults();
  CHECK(t.at(Category::Car) == BoxSize{3.9, 1.6, 1.56});
  CHECK(t.at(Category::Van) == BoxSize{5.0, 1.9, 2.1});
  CHECK(t.at(Category::Pedestrian) == BoxSize{0.8, 0.6, 1.73});
  CHECK(t.at(Category::Cyclist) == BoxSize{1.76, 0.6, 1.73});

  fixture::TempDir dir;
  std::ofstream(dir / "a.json") << R"({"Car": [4.2, 1.7, 1.5]})";
  const AnchorTable loaded = load_anchor_table(dir / "a.json");
  CHECK(loaded.at(Category::Car) == BoxSize{4.2, 1.7, 1.5});
  CHECK(loaded.at(Category::Van) == t.at(Category::Van));
  std::ofstream(dir / "b.json") << R"({"Car": [4.2, -1, 1.5]})";
  CHECK(code_of([&] { load_anchor_table(dir / "b.json"); }) == ErrorCode::InvalidArgument);
  std::ofstream(dir / "c.json") << R"({"Boat": [4.2, 1, 1.5]})";
  CHECK(code_of([&] { load_anchor_table(dir / "c.json"); }) == ErrorCode::UnknownCategory);
}

TEST_CASE("auto height") {
  const BevPolygon square = bev_polygon(BevFootprint{0, 0, 2, 2, 0});
  const HeightEstimate h = auto_height(column({-1.5f, -1.0f, 0.3f}), square);
  CHECK(h.center_z == doctest::Approx(-0.6).epsilon(1e-7));
  CHECK(h.height == doctest::Approx(1.8).epsilon(1e-7));

  CHECK(code_of([&] { auto_height(column({1.0f}), square); }) == ErrorCode::InsufficientPoints);
  CHECK(code_of([&] { auto_height(column({1.0f, 1.0f}), square); }) == ErrorCode::ZeroHeight);
  CHECK(code_of([&] { auto_height(column({1.0f, 2.0f}), square, {50, 40}); }) == ErrorCode::InvalidArgument);

  std::mt19937_64 rng(17);
  PointCloud cloud;
  std::vector<double> z;
  for (int i = 0; i < 1000; ++i) {
    const float zi = static_cast<float>(fixture::uniform(rng, 0, 1));
    cloud.points.push_back({static_cast<float>(fixture::uniform(rng, -0.9, 0.9)),
                            static_cast<float>(fixture::uniform(rng, -0.9, 0.9)), zi, 0});
    z.push_back(zi);
  }
  const HeightEstimate clipped = auto_height(cloud, square, {1, 99});
  const double lo = oracle::percentile(z, 1);
  const double hi = oracle::percentile(z, 99);
  CHECK(std::abs(clipped.height - (hi - lo)) < 1e-12);
  CHECK(std::abs(clipped.center_z - (hi + lo) / 2) < 1e-12);
  CHECK(std::abs(clipped.height - 0.98) <= 0.01);
}

TEST_CASE("box creation from a bird-view footprint") {
  AnnotationSession s(memory_sequence(), {}, counting_clock());
  const AnnotatedBox a = s.create_box_from_bev(0, column({-1.5f, -1.0f, 0.3f}), {0, 0, 4, 2, 0.3}, Category::Car);
  CHECK(a.box.size.height == doctest::Approx(1.8).epsilon(1e-7));
  CHECK(a.box.center.z() == doctest::Approx(-0.6).epsilon(1e-7));
  CHECK(a.box.size.length == 4);
  CHECK(a.box.size.width == 2);
  CHECK(a.box.yaw == 0.3);
  CHECK_FALSE(a.height_defaulted);
  CHECK(a.box.track_id == 0);

  const AnnotatedBox empty = s.create_box_from_bev(0, PointCloud{}, {10, 0, 4, 2, 0}, Category::Car);
  CHECK(empty.height_defaulted);
  CHECK(empty.box.size.height == 1.56);
  CHECK(empty.box.center.z() == 0.0);
  CHECK(empty.box.track_id == 1);

  const AnnotatedBox lone = s.create_box_from_bev(1, column({-1.2f}, 20, 0), {20, 0, 4, 2, 0}, Category::Van);
  CHECK(lone.height_defaulted);
  CHECK(lone.box.bottom() == doctest::Approx(-1.2).epsilon(1e-7));
  CHECK(lone.box.size.height == 2.1);

  CHECK(code_of([&] { s.create_box_from_bev(0, PointCloud{}, {0, 0, 0.0005, 2, 0}, Category::Car); }) ==
        ErrorCode::DegenerateFootprint);
  CHECK(code_of([&] { s.create_box_from_bev(9, PointCloud{}, {0, 0, 1, 1, 0}, Category::Car); }) ==
        ErrorCode::UnknownFrame);
  REQUIRE(s.log().size() == 3);
  CHECK(s.log()[0].kind == OpKind::Locate);
  CHECK(s.log()[0].track_id == 0);
  CHECK(s.log()[0].action.has_value());
}

TEST_CASE("created boxes contain every in-footprint point") {
  std::mt19937_64 rng(23);
  AnnotationSession s(memory_sequence(1));
  for (int trial = 0; trial < 200; ++trial) {
    const PointCloud cloud = fixture::random_cloud(rng, 400, 6.0);
    const BevFootprint f{fixture::uniform(rng, -3, 3), fixture::uniform(rng, -3, 3), fixture::uniform(rng, 1, 6),
                         fixture::uniform(rng, 1, 3), fixture::uniform(rng, -kPi, kPi)};
    const AnnotatedBox b = s.create_box_from_bev(0, cloud, f, Category::Car);
    if (b.height_defaulted) continue;
    for (const std::size_t i : points_in_bev_footprint(cloud, bev_polygon(f))) {
      const double z = cloud.points[i].z;
      CHECK(z >= b.box.bottom() - 1e-9);
      CHECK(z <= b.box.top() + 1e-9);
    }
  }
}

TEST_CASE("view edits") {
  SUBCASE("worked examples") {
    const Box3D b = make_box(1, 2, 0, 4, 1.6, 1.5, 0);
    const Box3D wider = apply_view_edit(b, {View::Front, EdgeMove{ViewEdge::Right, 0.2}});
    CHECK(wider.size.width == doctest::Approx(1.8));
    CHECK(wider.center.y() == doctest::Approx(2.1));
    CHECK(wider.center.x() == 1);
    CHECK(wider.size.length == 4);
    CHECK(wider.size.height == 1.5);

    const Box3D taller = apply_view_edit(b, {View::Front, EdgeMove{ViewEdge::Top, 0.1}});
    CHECK(taller.size.height == doctest::Approx(1.6));
    CHECK(taller.center.z() == doctest::Approx(0.05));
    CHECK(taller.center.head<2>() == b.center.head<2>());

    CHECK(code_of([&] { apply_view_edit(b, {View::Side, EdgeMove{ViewEdge::Left, -4.0}}); }) ==
          ErrorCode::DegenerateResult);
  }
  SUBCASE("yaw zero equals the axis-aligned face move exactly") {
    std::mt19937_64 rng(41);
    for (int i = 0; i < 2000; ++i) {
      Box3D b = fixture::random_box(rng);
      b.yaw = 0.0;
      const double d = fixture::uniform(rng, -0.2, 0.5);
      const auto edge = static_cast<ViewEdge>(fixture::uniform_int(rng, 0, 3));
      const View view = fixture::uniform_int(rng, 0, 1) ? View::Front : View::Side;
      Box3D want = b;
      const double sign = edge == ViewEdge::Right || edge == ViewEdge::Top ? 1.0 : -1.0;
      if (edge == ViewEdge::Top || edge == ViewEdge::Bottom) {
        want.size.height += d;
        want.center.z() += sign * d / 2.0;
      } else if (view == View::Front) {
        want.size.width += d;
        want.center.y() += sign * d / 2.0;
      } else {
        want.size.length += d;
        want.center.x() += sign * d / 2.0;
      }
      CHECK(apply_view_edit(b, {view, EdgeMove{edge, d}}) == want);
    }
  }
  SUBCASE("rotated edits equal the rotate-back oracle and invert") {
    std::mt19937_64 rng(43);
    for (int i = 0; i < 2000; ++i) {
      const Box3D b = fixture::random_box(rng);
      const ViewEdit e = random_edit(rng);
      const Box3D got = apply_view_edit(b, e);
      const Box3D want = rotate_back_oracle(b, e);
      CHECK((got.center - want.center).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(std::abs(got.size.length - want.size.length) < 1e-9);
      CHECK(std::abs(got.size.width - want.size.width) < 1e-9);
      CHECK(std::abs(got.size.height - want.size.height) < 1e-9);
      CHECK(got.yaw == b.yaw);

      const Box3D back = apply_view_edit(got, negated(e));
      CHECK((back.center - b.center).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(std::abs(back.size.length - b.size.length) < 1e-9);
      CHECK(std::abs(back.size.width - b.size.width) < 1e-9);
      CHECK(std::abs(back.size.height - b.size.height) < 1e-9);
    }
  }
  SUBCASE("only the edited face moves") {
    std::mt19937_64 rng(47);
    for (int i = 0; i < 500; ++i) {
      const Box3D b = fixture::random_box(rng);
      const auto edge = static_cast<ViewEdge>(fixture::uniform_int(rng, 0, 3));
      const View view = fixture::uniform_int(rng, 0, 1) ? View::Front : View::Side;
      const Box3D e = apply_view_edit(b, {view, EdgeMove{edge, fixture::uniform(rng, -0.2, 0.4)}});
      // Face offsets along the original body axes: [-x, +x, -y, +y, -z, +z].
      auto faces = [&](const Box3D& box) {
        const Vec2 hx(std::cos(b.yaw), std::sin(b.yaw));
        const Vec2 hy(-std::sin(b.yaw), std::cos(b.yaw));
        const double cx = box.center.head<2>().dot(hx);
        const double cy = box.center.head<2>().dot(hy);
        return std::array<double, 6>{cx - box.size.length / 2, cx + box.size.length / 2,
                                     cy - box.size.width / 2,  cy + box.size.width / 2,
                                     box.bottom(),             box.top()};
      };
      const auto before = faces(b);
      const auto after = faces(e);
      int moved_face = 0;
      if (edge == ViewEdge::Top) moved_face = 5;
      else if (edge == ViewEdge::Bottom) moved_face = 4;
      else if (view == View::Front) moved_face = edge == ViewEdge::Right ? 3 : 2;
      else moved_face = edge == ViewEdge::Right ? 1 : 0;
      for (int f = 0; f < 6; ++f) {
        if (f != moved_face) CHECK(std::abs(after[f] - before[f]) < 1e-9);
      }
    }
  }
}

TEST_CASE("bird-view adjustments and the height lock") {
  AnnotationSession s(memory_sequence(), {}, counting_clock());
  const int id = s.create_box_from_bev(0, PointCloud{}, {0, 0, 4, 2, 0}, Category::Car).box.track_id;

  CHECK(s.adjust_bev(0, id, BevShift{1, 0}).box.center.head<2>() == Vec2(1, 0));
  const double yaw = s.find(0, id)->box.yaw;
  CHECK(s.adjust_bev(0, id, BevRotate{2 * kPi}).box.yaw == doctest::Approx(yaw));
  const AnnotatedBox longer = s.adjust_bev(0, id, BevResize{BodyEdge::Front, 0.5});
  CHECK(longer.box.size.length == doctest::Approx(4.5));
  CHECK(longer.box.center.x() == doctest::Approx(1.25));
  const AnnotatedBox wider = s.adjust_bev(0, id, BevResize{BodyEdge::Left, 0.4});
  CHECK(wider.box.size.width == doctest::Approx(2.4));
  CHECK(wider.box.center.y() == doctest::Approx(0.2));
  CHECK(s.log()[1].kind == OpKind::Shift);
  CHECK(s.log()[2].kind == OpKind::Rotate);
  CHECK(s.log()[3].kind == OpKind::ResizeBev);
  CHECK(code_of([&] { s.adjust_bev(0, 77, BevShift{1, 0}); }) == ErrorCode::UnknownBox);

  s.lock_height(0, id, true);
  CHECK(s.log().back().kind == OpKind::VerifyMark);
  const double z = s.find(0, id)->box.center.z();
  CHECK(s.adjust_bev(0, id, BevShift{0, 3}).box.center.z() == z);
  CHECK(code_of([&] { s.view_edit(0, id, {View::Front, EdgeMove{ViewEdge::Top, 0.1}}); }) ==
        ErrorCode::HeightLocked);
  CHECK(code_of([&] { s.view_edit(0, id, {View::Side, ViewShift{0.0, 0.2}}); }) == ErrorCode::HeightLocked);
  // Horizontal edits remain allowed on a locked box.
  CHECK(s.view_edit(0, id, {View::Side, EdgeMove{ViewEdge::Right, 0.1}}).box.center.z() == z);

  s.lock_height(0, id, false);
  const AnnotatedBox taller = s.view_edit(0, id, {View::Front, EdgeMove{ViewEdge::Top, 0.1}});
  CHECK(taller.box.size.height == doctest::Approx(1.66));
  CHECK(s.log().back().kind == OpKind::AdjustHeight);
}

TEST_CASE("locked boxes keep height and center z bit for bit") {
  std::mt19937_64 rng(53);
  AnnotationSession s(memory_sequence(1));
  for (int trial = 0; trial < 50; ++trial) {
    const int id = s.create_box_from_bev(0, fixture::random_cloud(rng, 200, 5.0),
                                         {0, 0, fixture::uniform(rng, 2, 5), fixture::uniform(rng, 1, 2), 0},
                                         Category::Car)
                       .box.track_id;
    s.lock_height(0, id, true);
    const Box3D start = s.find(0, id)->box;
    for (int k = 0; k < 40; ++k) {
      BevAction a;
      switch (fixture::uniform_int(rng, 0, 2)) {
        case 0: a = BevShift{fixture::uniform(rng, -1, 1), fixture::uniform(rng, -1, 1)}; break;
        case 1: a = BevRotate{fixture::uniform(rng, -1, 1)}; break;
        default:
          a = BevResize{static_cast<BodyEdge>(fixture::uniform_int(rng, 0, 3)), fixture::uniform(rng, -0.1, 0.2)};
      }
      const Box3D now = s.adjust_bev(0, id, a).box;
      CHECK(now.size.height == start.size.height);
      CHECK(now.center.z() == start.center.z());
    }
  }
}

TEST_CASE("verification projection") {
  Calibration c = Calibration::canonical();
  c.p_rect << 700, 0, 600, 0, 0, 700, 180, 0, 0, 0, 1, 0;
  CHECK(code_of([&] { verify_projection(c, make_box(-10, 0, 0, 1, 1, 1, 0)); }) == ErrorCode::AllBehindCamera);

  const VerifyProjection v = verify_projection(c, make_box(10, 0, 0, 1, 1, 1, 0));
  CHECK((v.hull.u_min + v.hull.u_max) / 2 == doctest::Approx(600));
  CHECK((v.hull.v_min + v.hull.v_max) / 2 == doctest::Approx(180));

  std::mt19937_64 rng(59);
  const Calibration kitti = fixture::kitti_calibration();
  for (int i = 0; i < 300; ++i) {
    Box3D b = fixture::random_box(rng);
    b.center.x() = std::abs(b.center.x()) + 5;
    const VerifyProjection p = verify_projection(kitti, b);
    for (const ImagePoint& q : p.vertices) {
      if (q.behind_camera()) continue;
      CHECK(p.hull.contains(q.u, q.v));
    }
  }
}

TEST_CASE("inter-object transfer") {
  AnnotationSession s(memory_sequence(), {}, counting_clock());
  const AnnotatedBox src = s.create_box_from_bev(2, column({-1.5f, 0.1f}), {0, 0, 4, 2, 0.4}, Category::Van);
  s.lock_height(2, src.box.track_id, true);
  const AnnotatedBox copy = s.transfer_inter_object(2, src.box.track_id, 5, 0);
  CHECK(copy.box.center == Vec3(5, 0, src.box.center.z()));
  CHECK(copy.box.size == src.box.size);
  CHECK(copy.box.yaw == src.box.yaw);
  CHECK(copy.box.category == Category::Van);
  CHECK(copy.height_locked);
  CHECK(copy.box.track_id != src.box.track_id);
  Box3D diff = copy.box;
  diff.center.head<2>() = src.box.center.head<2>();
  diff.track_id = src.box.track_id;
  CHECK(diff == src.box);
  CHECK(s.log().back().kind == OpKind::TransferObject);
  CHECK(code_of([&] { s.transfer_inter_object(2, 99, 0, 0); }) == ErrorCode::UnknownBox);
}

TEST_CASE("inter-frame transfer") {
  AnnotationSession s(memory_sequence(), {}, counting_clock());
  std::mt19937_64 rng(61);
  for (int i = 0; i < 4; ++i) {
    s.create_box_from_bev(0, fixture::random_cloud(rng, 300, 10.0),
                          {fixture::uniform(rng, -8, 8), fixture::uniform(rng, -8, 8), 4, 2, fixture::uniform(rng, -3, 3)},
                          Category::Car);
  }
  s.lock_height(0, 2, true);

  const std::size_t before = s.log().size();
  const FrameTransferResult r = s.transfer_inter_frame(0, 1);
  CHECK(r.copied.size() == 4);
  CHECK(r.conflicts.empty());
  CHECK(s.log().size() == before + 5);
  REQUIRE(s.boxes(1).size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(s.boxes(1)[i] == s.boxes(0)[i]);

  const auto once = std::vector<AnnotatedBox>(s.boxes(1).begin(), s.boxes(1).end());
  const FrameTransferResult again = s.transfer_inter_frame(0, 1);
  CHECK(again.copied.empty());
  CHECK(again.conflicts == std::vector<int>{0, 1, 2, 3});
  CHECK(std::vector<AnnotatedBox>(s.boxes(1).begin(), s.boxes(1).end()) == once);

  s.remove_box(1, 3);
  const FrameTransferResult partial = s.transfer_inter_frame(0, 1);
  REQUIRE(partial.copied.size() == 1);
  CHECK(partial.copied[0].track_id == 3);
  CHECK(partial.conflicts == std::vector<int>{0, 1, 2});

  CHECK(code_of([&] { s.transfer_inter_frame(3, 4); }) == ErrorCode::NothingToTransfer);
  CHECK(code_of([&] { s.transfer_inter_frame(0, 12); }) == ErrorCode::UnknownFrame);
}

TEST_CASE("operation statistics") {
  CHECK(operation_stats({}).per_kind.at(OpKind::AdjustHeight) == 0);
  CHECK(operation_stats({}).per_kind.size() == std::size(kAllOpKinds));

  AnnotationSession s(memory_sequence(), {}, counting_clock());
  const int id = s.create_box_from_bev(0, column({-1.5f, 0.1f}), {0, 0, 4, 2, 0}, Category::Car).box.track_id;
  s.view_edit(0, id, {View::Front, EdgeMove{ViewEdge::Bottom, 0.1}});
  s.adjust_bev(0, id, BevShift{0.5, 0});
  for (int f = 1; f < 5; ++f) s.transfer_inter_frame(f - 1, f);

  const OperationStats st = operation_stats(s.log());
  CHECK(st.transferred.size() == 4);
  for (const InstanceKey& k : st.transferred) {
    CHECK(k.frame > 0);
    CHECK(st.per_instance.at(k).at(OpKind::AdjustHeight) == 0);
  }
  CHECK(st.per_instance.at({0, id}).at(OpKind::AdjustHeight) == 1);
  CHECK(st.mean_transferred.at(OpKind::AdjustHeight) == 0.0);
  CHECK(st.mean_manual.at(OpKind::AdjustHeight) == 1.0);

  // Recount straight from the log.
  std::map<OpKind, std::size_t> recount;
  for (const OperationEvent& e : s.log()) ++recount[e.kind];
  for (const OpKind k : kAllOpKinds) CHECK(st.per_kind.at(k) == (recount.contains(k) ? recount[k] : 0));
}

TEST_CASE("every mutating call appends one event and replay reproduces the session") {
  std::mt19937_64 rng(67);
  const auto cloud = std::make_shared<const PointCloud>(fixture::random_cloud(rng, 2000, 15.0));
  const CloudProvider clouds = [cloud](int) { return cloud; };
  AnnotationSession s(memory_sequence(), {}, counting_clock());
  const AnnotationSession initial = s;

  for (int step = 0; step < 300; ++step) {
    const int frame = fixture::uniform_int(rng, 0, 4);
    const auto existing = s.boxes(frame);
    Action action;
    const int pick = existing.empty() ? 0 : fixture::uniform_int(rng, 0, 6);
    const int track = existing.empty() ? 0 : existing[static_cast<std::size_t>(
                                                   fixture::uniform_int(rng, 0, int(existing.size()) - 1))]
                                                 .box.track_id;
    switch (pick) {
      case 0:
        action = CreateBox{frame, {fixture::uniform(rng, -10, 10), fixture::uniform(rng, -10, 10), 4, 2, 0.3},
                           Category::Car};
        break;
      case 1: action = AdjustBox{frame, track, BevShift{0.1, -0.2}}; break;
      case 2: action = EditBox{frame, track, random_edit(rng)}; break;
      case 3: action = SetHeightLock{frame, track, fixture::uniform_int(rng, 0, 1) == 1}; break;
      case 4: action = CopyObject{frame, track, fixture::uniform(rng, -5, 5), 1.0}; break;
      case 5: action = CopyFrame{frame, (frame + 1) % 5}; break;
      default: action = DeleteBox{frame, track};
    }
    const std::size_t before = s.log().size();
    try {
      const MutationResult r = s.apply(action, clouds);
      const std::size_t extra = r.transfer ? r.transfer->copied.size() : 0;
      CHECK(s.log().size() == before + 1 + extra);
      CHECK(s.log()[before].action == action);
    } catch (const Error&) {
      CHECK(s.log().size() == before);
    }
  }
  CHECK(replay(initial, s.log(), clouds) == s);
}

TEST_CASE("restore checks invariants") {
  const SequenceDescriptor seq = memory_sequence(2);
  AnnotatedBox b{make_box(0, 0, 0, 1, 1, 1, 0), false, false};
  CHECK(code_of([&] { AnnotationSession::restore(seq, {{0, {b, b}}}, {}, 5); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { AnnotationSession::restore(seq, {{7, {b}}}, {}, 5); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { AnnotationSession::restore(seq, {{0, {b}}}, {}, 0); }) == ErrorCode::InvalidArgument);
  CHECK(AnnotationSession::restore(seq, {{0, {b}}}, {}, 1).box_count() == 1);
}
