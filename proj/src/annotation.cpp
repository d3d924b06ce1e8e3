#include "flava/annotation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

#include "flava/error.hpp"

namespace flava {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Vec2 rotate(const Vec2& v, double yaw) noexcept {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

void require_finite(std::initializer_list<double> values, std::string_view what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be finite");
  }
}

void require_dimensions(const Box3D& box) {
  const BoxSize& s = box.size;
  if (!(s.length > kMinBoxDimension && s.width > kMinBoxDimension && s.height > kMinBoxDimension)) {
    throw Error(ErrorCode::DegenerateResult,
                fmt::format("dimensions ({:.4f}, {:.4f}, {:.4f}) fall below {} m", s.length, s.width,
                            s.height, kMinBoxDimension));
  }
}

double wall_clock() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

ViewEdit resize_as_view_edit(const BevResize& r) {
  switch (r.edge) {
    case BodyEdge::Front: return {View::Side, EdgeMove{ViewEdge::Right, r.delta}};
    case BodyEdge::Rear: return {View::Side, EdgeMove{ViewEdge::Left, r.delta}};
    case BodyEdge::Left: return {View::Front, EdgeMove{ViewEdge::Right, r.delta}};
    case BodyEdge::Right: return {View::Front, EdgeMove{ViewEdge::Left, r.delta}};
  }
  return {};
}

// Percentile with linear interpolation between order statistics of a sorted range.
double percentile(const std::vector<double>& sorted, double p) {
  const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

// --- anchors -------------------------------------------------------------------

AnchorTable AnchorTable::defaults() {
  AnchorTable t;
  t.sizes = {
      {Category::Car, {3.9, 1.6, 1.56}},
      {Category::Van, {5.0, 1.9, 2.1}},
      {Category::Pedestrian, {0.8, 0.6, 1.73}},
      {Category::Cyclist, {1.76, 0.6, 1.73}},
      {Category::Truck, {10.1, 2.6, 3.4}},
      {Category::Tram, {16.1, 2.5, 3.5}},
      {Category::Misc, {3.6, 1.5, 1.9}},
      {Category::PersonSitting, {0.8, 0.6, 1.27}},
  };
  return t;
}

const BoxSize& AnchorTable::at(Category c) const {
  auto it = sizes.find(c);
  if (it == sizes.end()) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("no anchor for {}", to_string(c)));
  }
  return it->second;
}

void AnchorTable::validate() const {
  for (const auto& [cat, s] : sizes) {
    if (!(s.length > 0.0 && s.width > 0.0 && s.height > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("anchor for {} must be positive", to_string(cat)));
    }
  }
}

AnchorTable load_anchor_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  AnchorTable table = AnchorTable::defaults();
  try {
    const nlohmann::json doc = nlohmann::json::parse(in);
    for (const auto& [name, dims] : doc.items()) {
      const auto cat = parse_category(name);
      if (!cat) throw Error(ErrorCode::UnknownCategory, name);
      const auto v = dims.get<std::vector<double>>();
      if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, name + " needs [length, width, height]");
      table.sizes[*cat] = {v[0], v[1], v[2]};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  table.validate();
  return table;
}

// --- auto height ---------------------------------------------------------------

HeightEstimate auto_height(const PointCloud& cloud, const BevPolygon& footprint, ClipPercentiles clip) {
  if (!clip.valid()) throw Error(ErrorCode::InvalidArgument, "percentiles must satisfy 0 <= low < high <= 100");
  const std::vector<std::size_t> inside = points_in_bev_footprint(cloud, footprint);
  if (inside.size() < 2) {
    throw Error(ErrorCode::InsufficientPoints,
                fmt::format("{} point(s) in footprint, need 2", inside.size()));
  }
  std::vector<double> z;
  z.reserve(inside.size());
  for (std::size_t i : inside) z.push_back(cloud.points[i].z);
  std::sort(z.begin(), z.end());
  const double z_low = percentile(z, clip.low);
  const double z_high = percentile(z, clip.high);
  if (z_high - z_low < kMinBoxDimension) {
    throw Error(ErrorCode::ZeroHeight, fmt::format("vertical span {:.6f} m", z_high - z_low));
  }
  return {(z_high + z_low) / 2.0, z_high - z_low};
}

// --- view edits -------------------------------------------------------------------

bool ViewEdit::touches_height() const noexcept {
  if (const auto* m = std::get_if<EdgeMove>(&change)) {
    return m->edge == ViewEdge::Top || m->edge == ViewEdge::Bottom;
  }
  return std::get<ViewShift>(change).vertical != 0.0;
}

ViewEdit negated(const ViewEdit& edit) {
  ViewEdit out = edit;
  std::visit(Overloaded{[](EdgeMove& m) { m.delta = -m.delta; },
                        [](ViewShift& s) {
                          s.horizontal = -s.horizontal;
                          s.vertical = -s.vertical;
                        }},
             out.change);
  return out;
}

Box3D apply_view_edit(const Box3D& box, const ViewEdit& edit) {
  Box3D out = box;
  // Horizontal screen axis of the view, expressed in the unrotated box frame.
  const bool lateral = edit.view == View::Front;
  const auto body = [lateral](double along) { return lateral ? Vec2(0.0, along) : Vec2(along, 0.0); };

  if (const auto* m = std::get_if<EdgeMove>(&edit.change)) {
    require_finite({m->delta}, "edge delta");
    switch (m->edge) {
      case ViewEdge::Top:
        out.size.height += m->delta;
        out.center.z() += m->delta / 2.0;
        break;
      case ViewEdge::Bottom:
        out.size.height += m->delta;
        out.center.z() -= m->delta / 2.0;
        break;
      case ViewEdge::Left:
      case ViewEdge::Right: {
        // Unrotated: the named face moves by delta, the opposite face stays,
        // so the center moves by delta/2 toward the edited face.
        const double sign = m->edge == ViewEdge::Right ? 1.0 : -1.0;
        (lateral ? out.size.width : out.size.length) += m->delta;
        out.center.head<2>() += rotate(body(sign * m->delta / 2.0), box.yaw);
        break;
      }
    }
  } else {
    const auto& s = std::get<ViewShift>(edit.change);
    require_finite({s.horizontal, s.vertical}, "shift");
    out.center.head<2>() += rotate(body(s.horizontal), box.yaw);
    out.center.z() += s.vertical;
  }
  require_dimensions(out);
  return out;
}

// --- verification -------------------------------------------------------------------

VerifyProjection verify_projection(const Calibration& calib, const Box3D& box) {
  VerifyProjection out;
  const auto corners = box_corners(box);
  double u_min = std::numeric_limits<double>::infinity();
  double v_min = u_min;
  double u_max = -u_min;
  double v_max = -u_min;
  bool any_in_front = false;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    out.vertices[i] = project_point(calib, corners[i]);
    const ImagePoint& p = out.vertices[i];
    if (p.behind_camera()) continue;
    any_in_front = true;
    u_min = std::min(u_min, p.u);
    u_max = std::max(u_max, p.u);
    v_min = std::min(v_min, p.v);
    v_max = std::max(v_max, p.v);
  }
  if (!any_in_front) {
    throw Error(ErrorCode::AllBehindCamera, fmt::format("box {} is behind the camera", box.track_id));
  }
  out.hull = {u_min, v_min, u_max, v_max};
  return out;
}

// --- op kinds -------------------------------------------------------------------

std::string_view to_string(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::Locate: return "Locate";
    case OpKind::Shift: return "Shift";
    case OpKind::Rotate: return "Rotate";
    case OpKind::ResizeBev: return "ResizeBev";
    case OpKind::AdjustHeight: return "AdjustHeight";
    case OpKind::TransferObject: return "TransferObject";
    case OpKind::TransferFrame: return "TransferFrame";
    case OpKind::Delete: return "Delete";
    case OpKind::VerifyMark: return "VerifyMark";
  }
  return "Locate";
}

std::optional<OpKind> parse_op_kind(std::string_view name) noexcept {
  for (OpKind k : kAllOpKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

// --- session -------------------------------------------------------------------------

AnnotationSession::AnnotationSession(SequenceDescriptor sequence, EngineConfig config, Clock clock)
    : sequence_(std::move(sequence)),
      config_(std::move(config)),
      clock_(clock ? std::move(clock) : Clock(wall_clock)) {
  config_.anchors.validate();
  if (!config_.clip.valid()) {
    throw Error(ErrorCode::InvalidArgument, "percentiles must satisfy 0 <= low < high <= 100");
  }
}

AnnotationSession AnnotationSession::restore(SequenceDescriptor sequence, FrameBoxes boxes,
                                             std::vector<OperationEvent> log, int next_track_id,
                                             EngineConfig config, Clock clock) {
  AnnotationSession s(std::move(sequence), std::move(config), std::move(clock));
  int max_track = -1;
  for (const auto& [frame, list] : boxes) {
    if (!s.sequence_.has_frame(frame)) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("boxes for unknown frame {}", frame));
    }
    std::set<int> seen;
    for (const AnnotatedBox& b : list) {
      if (!b.box.valid()) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("frame {} track {} is not a valid box", frame, b.box.track_id));
      }
      if (!seen.insert(b.box.track_id).second) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("frame {} repeats track {}", frame, b.box.track_id));
      }
      max_track = std::max(max_track, b.box.track_id);
    }
  }
  if (next_track_id <= max_track) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("next track id {} not above existing track {}", next_track_id, max_track));
  }
  std::erase_if(boxes, [](const auto& kv) { return kv.second.empty(); });
  s.boxes_ = std::move(boxes);
  s.log_ = std::move(log);
  s.next_track_id_ = next_track_id;
  return s;
}

std::span<const AnnotatedBox> AnnotationSession::boxes(int frame) const {
  auto it = boxes_.find(frame);
  if (it == boxes_.end()) return {};
  return it->second;
}

std::optional<AnnotatedBox> AnnotationSession::find(int frame, int track_id) const {
  for (const AnnotatedBox& b : boxes(frame)) {
    if (b.box.track_id == track_id) return b;
  }
  return std::nullopt;
}

std::size_t AnnotationSession::box_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [frame, list] : boxes_) n += list.size();
  return n;
}

void AnnotationSession::require_frame(int frame) const {
  if (!sequence_.has_frame(frame)) {
    throw Error(ErrorCode::UnknownFrame, fmt::format("sequence {} has no frame {}", sequence_.id, frame));
  }
}

AnnotatedBox& AnnotationSession::entry(int frame, int track_id) {
  require_frame(frame);
  auto it = boxes_.find(frame);
  if (it != boxes_.end()) {
    for (AnnotatedBox& b : it->second) {
      if (b.box.track_id == track_id) return b;
    }
  }
  throw Error(ErrorCode::UnknownBox, fmt::format("frame {} has no track {}", frame, track_id));
}

void AnnotationSession::log_event(OpKind kind, int frame, int track_id, double timestamp,
                                  std::optional<Action> action) {
  log_.push_back({kind, frame, track_id, timestamp, std::move(action)});
}

AnnotatedBox AnnotationSession::create_box_from_bev(int frame, const PointCloud& cloud,
                                                    const BevFootprint& footprint, Category category) {
  require_frame(frame);
  require_finite({footprint.x, footprint.y, footprint.length, footprint.width, footprint.yaw}, "footprint");
  if (footprint.length <= kMinBoxDimension || footprint.width <= kMinBoxDimension) {
    throw Error(ErrorCode::DegenerateFootprint,
                fmt::format("footprint {:.4f} x {:.4f} m is degenerate", footprint.length, footprint.width));
  }
  BevFootprint f = footprint;
  f.yaw = normalize_angle(f.yaw);
  const BevPolygon polygon = bev_polygon(f);

  AnnotatedBox created;
  created.box.center = Vec3(f.x, f.y, 0.0);
  created.box.size = {f.length, f.width, 0.0};
  created.box.yaw = f.yaw;
  created.box.category = category;
  created.box.track_id = next_track_id_;
  try {
    const HeightEstimate h = auto_height(cloud, polygon, config_.clip);
    created.box.center.z() = h.center_z;
    created.box.size.height = h.height;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InsufficientPoints && e.code() != ErrorCode::ZeroHeight) throw;
    const double height = config_.anchors.at(category).height;
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t i : points_in_bev_footprint(cloud, polygon)) {
      lowest = std::min(lowest, static_cast<double>(cloud.points[i].z));
    }
    created.box.size.height = height;
    created.box.center.z() = std::isfinite(lowest) ? lowest + height / 2.0 : 0.0;
    created.height_defaulted = true;
  }

  const double now = clock_();
  boxes_[frame].push_back(created);
  ++next_track_id_;
  log_event(OpKind::Locate, frame, created.box.track_id, now, CreateBox{frame, footprint, category});
  return created;
}

AnnotatedBox AnnotationSession::adjust_bev(int frame, int track_id, const BevAction& action) {
  AnnotatedBox& target = entry(frame, track_id);
  Box3D box = target.box;
  const OpKind kind = std::visit(
      Overloaded{[&](const BevShift& s) {
                   require_finite({s.dx, s.dy}, "shift");
                   box.center.x() += s.dx;
                   box.center.y() += s.dy;
                   return OpKind::Shift;
                 },
                 [&](const BevRotate& r) {
                   require_finite({r.dtheta}, "rotation");
                   box.yaw = normalize_angle(box.yaw + r.dtheta);
                   return OpKind::Rotate;
                 },
                 [&](const BevResize& r) {
                   box = apply_view_edit(box, resize_as_view_edit(r));
                   return OpKind::ResizeBev;
                 }},
      action);
  // Ground-plane actions never touch the vertical extent; restate it so a
  // locked box keeps its exact bits.
  box.center.z() = target.box.center.z();
  box.size.height = target.box.size.height;

  const double now = clock_();
  target.box = box;
  log_event(kind, frame, track_id, now, AdjustBox{frame, track_id, action});
  return target;
}

AnnotatedBox AnnotationSession::view_edit(int frame, int track_id, const ViewEdit& edit) {
  AnnotatedBox& target = entry(frame, track_id);
  if (target.height_locked && edit.touches_height()) {
    throw Error(ErrorCode::HeightLocked,
                fmt::format("frame {} track {} has a locked height", frame, track_id));
  }
  const Box3D box = apply_view_edit(target.box, edit);
  OpKind kind = OpKind::Shift;
  if (edit.touches_height()) {
    kind = OpKind::AdjustHeight;
  } else if (std::holds_alternative<EdgeMove>(edit.change)) {
    kind = OpKind::ResizeBev;
  }
  const double now = clock_();
  target.box = box;
  log_event(kind, frame, track_id, now, EditBox{frame, track_id, edit});
  return target;
}

AnnotatedBox AnnotationSession::lock_height(int frame, int track_id, bool locked) {
  AnnotatedBox& target = entry(frame, track_id);
  const double now = clock_();
  target.height_locked = locked;
  log_event(OpKind::VerifyMark, frame, track_id, now, SetHeightLock{frame, track_id, locked});
  return target;
}

AnnotatedBox AnnotationSession::transfer_inter_object(int frame, int source_track_id, double x, double y) {
  require_finite({x, y}, "target center");
  AnnotatedBox copy = entry(frame, source_track_id);
  copy.box.center.x() = x;
  copy.box.center.y() = y;
  copy.box.track_id = next_track_id_;
  const double now = clock_();
  boxes_[frame].push_back(copy);
  ++next_track_id_;
  log_event(OpKind::TransferObject, frame, copy.box.track_id, now,
            CopyObject{frame, source_track_id, x, y});
  return copy;
}

FrameTransferResult AnnotationSession::transfer_inter_frame(int from_frame, int to_frame) {
  require_frame(from_frame);
  require_frame(to_frame);
  const std::span<const AnnotatedBox> source = boxes(from_frame);
  if (source.empty()) {
    throw Error(ErrorCode::NothingToTransfer, fmt::format("frame {} has no boxes", from_frame));
  }
  FrameTransferResult result;
  std::vector<AnnotatedBox> copies;
  for (const AnnotatedBox& b : source) {
    if (find(to_frame, b.box.track_id)) {
      result.conflicts.push_back(b.box.track_id);
    } else {
      copies.push_back(b);
      result.copied.push_back(b.box);
    }
  }
  const double now = clock_();
  log_event(OpKind::TransferFrame, to_frame, -1, now, CopyFrame{from_frame, to_frame});
  auto& target = boxes_[to_frame];
  for (const AnnotatedBox& c : copies) {
    target.push_back(c);
    log_event(OpKind::TransferFrame, to_frame, c.box.track_id, now, std::nullopt);
  }
  if (target.empty()) boxes_.erase(to_frame);
  return result;
}

void AnnotationSession::remove_box(int frame, int track_id) {
  entry(frame, track_id);  // existence check
  const double now = clock_();
  auto& list = boxes_[frame];
  std::erase_if(list, [&](const AnnotatedBox& b) { return b.box.track_id == track_id; });
  if (list.empty()) boxes_.erase(frame);
  log_event(OpKind::Delete, frame, track_id, now, DeleteBox{frame, track_id});
}

MutationResult AnnotationSession::apply(const Action& action, const CloudProvider& clouds) {
  return std::visit(
      Overloaded{
          [&](const CreateBox& a) -> MutationResult {
            require_frame(a.frame);
            if (!clouds) throw Error(ErrorCode::InvalidArgument, "box creation needs a cloud provider");
            const auto cloud = clouds(a.frame);
            if (!cloud) throw Error(ErrorCode::MissingFile, fmt::format("no cloud for frame {}", a.frame));
            return {create_box_from_bev(a.frame, *cloud, a.footprint, a.category), std::nullopt};
          },
          [&](const AdjustBox& a) -> MutationResult {
            return {adjust_bev(a.frame, a.track_id, a.action), std::nullopt};
          },
          [&](const EditBox& a) -> MutationResult {
            return {view_edit(a.frame, a.track_id, a.edit), std::nullopt};
          },
          [&](const SetHeightLock& a) -> MutationResult {
            return {lock_height(a.frame, a.track_id, a.locked), std::nullopt};
          },
          [&](const CopyObject& a) -> MutationResult {
            return {transfer_inter_object(a.frame, a.source_track_id, a.x, a.y), std::nullopt};
          },
          [&](const CopyFrame& a) -> MutationResult {
            return {std::nullopt, transfer_inter_frame(a.from_frame, a.to_frame)};
          },
          [&](const DeleteBox& a) -> MutationResult {
            remove_box(a.frame, a.track_id);
            return {};
          }},
      action);
}

AnnotationSession replay(const AnnotationSession& initial, std::span<const OperationEvent> log,
                         const CloudProvider& clouds) {
  auto stamp = std::make_shared<double>(0.0);
  FrameBoxes boxes = initial.frames();
  AnnotationSession session = AnnotationSession::restore(
      initial.sequence(), std::move(boxes),
      std::vector<OperationEvent>(initial.log().begin(), initial.log().end()), initial.next_track_id(),
      initial.config(), [stamp] { return *stamp; });
  for (const OperationEvent& event : log) {
    if (!event.action) continue;
    *stamp = event.timestamp;
    session.apply(*event.action, clouds);
  }
  return session;
}

// --- statistics ------------------------------------------------------------------------

OperationStats operation_stats(std::span<const OperationEvent> log) {
  OperationStats stats;
  auto zeroed = [] {
    KindCounts c;
    for (OpKind k : kAllOpKinds) c[k] = 0;
    return c;
  };
  stats.per_kind = zeroed();
  for (const OperationEvent& e : log) {
    ++stats.per_kind[e.kind];
    if (e.track_id < 0) continue;
    const InstanceKey key{e.frame, e.track_id};
    auto [it, inserted] = stats.per_instance.try_emplace(key, zeroed());
    if (inserted && (e.kind == OpKind::TransferFrame || e.kind == OpKind::TransferObject)) {
      stats.transferred.insert(key);
    }
    ++it->second[e.kind];
  }

  auto mean_over = [&](auto&& include) {
    KindMeans means;
    std::size_t n = 0;
    for (OpKind k : kAllOpKinds) means[k] = 0.0;
    for (const auto& [key, counts] : stats.per_instance) {
      if (!include(key)) continue;
      ++n;
      for (const auto& [k, c] : counts) means[k] += static_cast<double>(c);
    }
    if (n > 0) {
      for (auto& [k, m] : means) m /= static_cast<double>(n);
    }
    return means;
  };
  stats.mean_all = mean_over([](const InstanceKey&) { return true; });
  stats.mean_transferred = mean_over([&](const InstanceKey& k) { return stats.transferred.count(k) > 0; });
  stats.mean_manual = mean_over([&](const InstanceKey& k) { return stats.transferred.count(k) == 0; });
  return stats;
}

}  // namespace flava
