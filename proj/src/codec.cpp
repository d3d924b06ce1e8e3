#include "flava/codec.hpp"

#include <limits>

#include "flava/error.hpp"

namespace flava {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

template <typename Matrix>
Json matrix_to_json(const Matrix& m) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  }
  return arr;
}

template <typename Matrix>
void matrix_from_json(const Json& j, Matrix& m) {
  const auto values = j.get<std::vector<double>>();
  if (values.size() != static_cast<std::size_t>(m.rows() * m.cols())) {
    throw Error(ErrorCode::InvalidArgument, "matrix has wrong number of entries");
  }
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index jj = 0; jj < m.cols(); ++jj) m(i, jj) = values[k++];
  }
}

// JSON has no NaN; behind-camera projections serialize as null.
Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

std::string_view to_string(View v) noexcept { return v == View::Front ? "Front" : "Side"; }

std::string_view to_string(ViewEdge e) noexcept {
  switch (e) {
    case ViewEdge::Left: return "Left";
    case ViewEdge::Right: return "Right";
    case ViewEdge::Top: return "Top";
    case ViewEdge::Bottom: return "Bottom";
  }
  return "Left";
}

std::string_view to_string(BodyEdge e) noexcept {
  switch (e) {
    case BodyEdge::Front: return "Front";
    case BodyEdge::Rear: return "Rear";
    case BodyEdge::Left: return "Left";
    case BodyEdge::Right: return "Right";
  }
  return "Front";
}

View parse_view(std::string_view s) {
  if (s == "Front") return View::Front;
  if (s == "Side") return View::Side;
  throw Error(ErrorCode::InvalidArgument, "unknown view '" + std::string(s) + "'");
}

ViewEdge parse_view_edge(std::string_view s) {
  for (ViewEdge e : {ViewEdge::Left, ViewEdge::Right, ViewEdge::Top, ViewEdge::Bottom}) {
    if (to_string(e) == s) return e;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown view edge '" + std::string(s) + "'");
}

BodyEdge parse_body_edge(std::string_view s) {
  for (BodyEdge e : {BodyEdge::Front, BodyEdge::Rear, BodyEdge::Left, BodyEdge::Right}) {
    if (to_string(e) == s) return e;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown body edge '" + std::string(s) + "'");
}

void to_json(Json& j, Category c) { j = std::string(to_string(c)); }

void from_json(const Json& j, Category& c) {
  const auto name = j.get<std::string>();
  const auto parsed = parse_category(name);
  if (!parsed) throw Error(ErrorCode::UnknownCategory, name);
  c = *parsed;
}

void to_json(Json& j, const Box3D& b) {
  j = Json{{"track_id", b.track_id},
           {"category", b.category},
           {"center", {{"x", b.center.x()}, {"y", b.center.y()}, {"z", b.center.z()}}},
           {"size", {{"length", b.size.length}, {"width", b.size.width}, {"height", b.size.height}}},
           {"yaw", b.yaw}};
}

void from_json(const Json& j, Box3D& b) {
  b.track_id = j.at("track_id").get<int>();
  b.category = j.at("category").get<Category>();
  const Json& c = j.at("center");
  b.center = Vec3(c.at("x").get<double>(), c.at("y").get<double>(), c.at("z").get<double>());
  const Json& s = j.at("size");
  b.size = {s.at("length").get<double>(), s.at("width").get<double>(), s.at("height").get<double>()};
  b.yaw = j.at("yaw").get<double>();
}

void to_json(Json& j, const AnnotatedBox& b) {
  to_json(j, b.box);
  j["height_locked"] = b.height_locked;
  j["height_defaulted"] = b.height_defaulted;
}

void from_json(const Json& j, AnnotatedBox& b) {
  from_json(j, b.box);
  b.height_locked = j.at("height_locked").get<bool>();
  b.height_defaulted = j.value("height_defaulted", false);
}

AnnotatedBox wire_box_from_json(const Json& j) {
  try {
    AnnotatedBox b = j.get<AnnotatedBox>();
    if (!b.box.valid()) throw Error(ErrorCode::InvalidArgument, "box violates its invariants");
    return b;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, e.what());
  }
}

void to_json(Json& j, const BevFootprint& f) {
  j = Json{{"x", f.x}, {"y", f.y}, {"length", f.length}, {"width", f.width}, {"yaw", f.yaw}};
}

void from_json(const Json& j, BevFootprint& f) {
  f.x = j.at("x").get<double>();
  f.y = j.at("y").get<double>();
  f.length = j.at("length").get<double>();
  f.width = j.at("width").get<double>();
  f.yaw = j.value("yaw", 0.0);
}

void to_json(Json& j, const ViewEdit& e) {
  j = Json{{"view", to_string(e.view)}};
  std::visit(Overloaded{[&](const EdgeMove& m) {
                          j["edge"] = to_string(m.edge);
                          j["delta"] = m.delta;
                        },
                        [&](const ViewShift& s) {
                          j["shift"] = {{"horizontal", s.horizontal}, {"vertical", s.vertical}};
                        }},
             e.change);
}

void from_json(const Json& j, ViewEdit& e) {
  e.view = parse_view(j.at("view").get<std::string>());
  const bool has_edge = j.contains("edge");
  const bool has_shift = j.contains("shift");
  if (has_edge == has_shift) {
    throw Error(ErrorCode::InvalidArgument, "view edit needs exactly one of 'edge' or 'shift'");
  }
  if (has_edge) {
    e.change = EdgeMove{parse_view_edge(j.at("edge").get<std::string>()), j.at("delta").get<double>()};
  } else {
    const Json& s = j.at("shift");
    e.change = ViewShift{s.value("horizontal", 0.0), s.value("vertical", 0.0)};
  }
}

void to_json(Json& j, const BevAction& a) {
  std::visit(Overloaded{[&](const BevShift& s) { j = Json{{"shift", {{"dx", s.dx}, {"dy", s.dy}}}}; },
                        [&](const BevRotate& r) { j = Json{{"rotate", {{"dtheta", r.dtheta}}}}; },
                        [&](const BevResize& r) {
                          j = Json{{"resize", {{"edge", to_string(r.edge)}, {"delta", r.delta}}}};
                        }},
             a);
}

void from_json(const Json& j, BevAction& a) {
  if (j.contains("shift")) {
    const Json& s = j.at("shift");
    a = BevShift{s.value("dx", 0.0), s.value("dy", 0.0)};
  } else if (j.contains("rotate")) {
    a = BevRotate{j.at("rotate").at("dtheta").get<double>()};
  } else if (j.contains("resize")) {
    const Json& r = j.at("resize");
    a = BevResize{parse_body_edge(r.at("edge").get<std::string>()), r.at("delta").get<double>()};
  } else {
    throw Error(ErrorCode::InvalidArgument, "bird-view action needs shift, rotate or resize");
  }
}

void to_json(Json& j, const Action& a) {
  std::visit(
      Overloaded{
          [&](const CreateBox& c) {
            j = Json{{"type", "create"}, {"frame", c.frame}, {"footprint", c.footprint}, {"category", c.category}};
          },
          [&](const AdjustBox& c) {
            j = Json{{"type", "adjust"}, {"frame", c.frame}, {"track_id", c.track_id}, {"action", c.action}};
          },
          [&](const EditBox& c) {
            j = Json{{"type", "view_edit"}, {"frame", c.frame}, {"track_id", c.track_id}, {"edit", c.edit}};
          },
          [&](const SetHeightLock& c) {
            j = Json{{"type", "lock"}, {"frame", c.frame}, {"track_id", c.track_id}, {"locked", c.locked}};
          },
          [&](const CopyObject& c) {
            j = Json{{"type", "transfer_object"}, {"frame", c.frame},
                     {"source_track_id", c.source_track_id}, {"x", c.x}, {"y", c.y}};
          },
          [&](const CopyFrame& c) {
            j = Json{{"type", "transfer_frame"}, {"from", c.from_frame}, {"to", c.to_frame}};
          },
          [&](const DeleteBox& c) {
            j = Json{{"type", "delete"}, {"frame", c.frame}, {"track_id", c.track_id}};
          }},
      a);
}

void from_json(const Json& j, Action& a) {
  const auto type = j.at("type").get<std::string>();
  if (type == "create") {
    a = CreateBox{j.at("frame").get<int>(), j.at("footprint").get<BevFootprint>(),
                  j.at("category").get<Category>()};
  } else if (type == "adjust") {
    a = AdjustBox{j.at("frame").get<int>(), j.at("track_id").get<int>(), j.at("action").get<BevAction>()};
  } else if (type == "view_edit") {
    a = EditBox{j.at("frame").get<int>(), j.at("track_id").get<int>(), j.at("edit").get<ViewEdit>()};
  } else if (type == "lock") {
    a = SetHeightLock{j.at("frame").get<int>(), j.at("track_id").get<int>(), j.at("locked").get<bool>()};
  } else if (type == "transfer_object") {
    a = CopyObject{j.at("frame").get<int>(), j.at("source_track_id").get<int>(), j.at("x").get<double>(),
                   j.at("y").get<double>()};
  } else if (type == "transfer_frame") {
    a = CopyFrame{j.at("from").get<int>(), j.at("to").get<int>()};
  } else if (type == "delete") {
    a = DeleteBox{j.at("frame").get<int>(), j.at("track_id").get<int>()};
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown action type '" + type + "'");
  }
}

void to_json(Json& j, const OperationEvent& e) {
  j = Json{{"kind", to_string(e.kind)}, {"frame", e.frame}, {"track_id", e.track_id}, {"timestamp", e.timestamp}};
  if (e.action) j["action"] = *e.action;
}

void from_json(const Json& j, OperationEvent& e) {
  const auto kind = parse_op_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown operation kind");
  e.kind = *kind;
  e.frame = j.at("frame").get<int>();
  e.track_id = j.at("track_id").get<int>();
  e.timestamp = j.at("timestamp").get<double>();
  e.action.reset();
  if (j.contains("action")) e.action = j.at("action").get<Action>();
}

void to_json(Json& j, const Calibration& c) {
  j = Json{{"p_rect", matrix_to_json(c.p_rect)},
           {"r_rect", matrix_to_json(c.r_rect)},
           {"t_velo_cam", matrix_to_json(c.t_velo_cam)}};
}

void from_json(const Json& j, Calibration& c) {
  matrix_from_json(j.at("p_rect"), c.p_rect);
  matrix_from_json(j.at("r_rect"), c.r_rect);
  matrix_from_json(j.at("t_velo_cam"), c.t_velo_cam);
}

void to_json(Json& j, const SequenceDescriptor& s) {
  Json frames = Json::array();
  for (const FrameRef& f : s.frames) {
    frames.push_back({{"index", f.index}, {"cloud", f.cloud.generic_string()}, {"image", f.image.generic_string()}});
  }
  j = Json{{"id", s.id},
           {"directory", s.directory.generic_string()},
           {"calibration", s.calibration},
           {"frames", std::move(frames)}};
}

void from_json(const Json& j, SequenceDescriptor& s) {
  s.id = j.at("id").get<std::string>();
  s.directory = j.at("directory").get<std::string>();
  s.calibration = j.at("calibration").get<Calibration>();
  s.frames.clear();
  for (const Json& f : j.at("frames")) {
    s.frames.push_back({f.at("index").get<int>(), f.at("cloud").get<std::string>(),
                        f.value("image", std::string())});
  }
  for (std::size_t i = 1; i < s.frames.size(); ++i) {
    if (s.frames[i].index <= s.frames[i - 1].index) {
      throw Error(ErrorCode::InvalidArgument, "frame indices must be strictly increasing");
    }
  }
}

void to_json(Json& j, const ImagePoint& p) {
  j = Json{{"u", number_or_null(p.u)},
           {"v", number_or_null(p.v)},
           {"depth", p.depth},
           {"behind_camera", p.behind_camera()}};
}

void to_json(Json& j, const Rect2D& r) {
  j = Json{{"u_min", r.u_min}, {"v_min", r.v_min}, {"u_max", r.u_max}, {"v_max", r.v_max}};
}

void to_json(Json& j, const VerifyProjection& v) {
  Json vertices = Json::array();
  for (const ImagePoint& p : v.vertices) vertices.push_back(p);
  j = Json{{"vertices", std::move(vertices)}, {"hull", v.hull}};
}

void to_json(Json& j, const FrameTransferResult& r) {
  Json copied = Json::array();
  for (const Box3D& b : r.copied) copied.push_back(b);
  j = Json{{"copied", std::move(copied)}, {"conflicts", r.conflicts}};
}

}  // namespace flava
