#pragma once

// JSON forms shared by the session archive and the HTTP API. All lengths are
// meters and all angles radians.
//
// Wire box:
//   {"track_id": 3, "category": "Car",
//    "center": {"x": .., "y": .., "z": ..},
//    "size": {"length": .., "width": .., "height": ..},
//    "yaw": .., "height_locked": false, "height_defaulted": false}

#include <json.hpp>

#include "flava/annotation.hpp"
#include "flava/calibration.hpp"
#include "flava/geometry.hpp"
#include "flava/kitti_io.hpp"

namespace flava {

using Json = nlohmann::json;

void to_json(Json& j, Category c);
void from_json(const Json& j, Category& c);

void to_json(Json& j, const Box3D& b);
void from_json(const Json& j, Box3D& b);

void to_json(Json& j, const AnnotatedBox& b);
void from_json(const Json& j, AnnotatedBox& b);

void to_json(Json& j, const BevFootprint& f);
void from_json(const Json& j, BevFootprint& f);

void to_json(Json& j, const ViewEdit& e);
void from_json(const Json& j, ViewEdit& e);

void to_json(Json& j, const BevAction& a);
void from_json(const Json& j, BevAction& a);

void to_json(Json& j, const Action& a);
void from_json(const Json& j, Action& a);

void to_json(Json& j, const OperationEvent& e);
void from_json(const Json& j, OperationEvent& e);

void to_json(Json& j, const Calibration& c);
void from_json(const Json& j, Calibration& c);

void to_json(Json& j, const SequenceDescriptor& s);
void from_json(const Json& j, SequenceDescriptor& s);

void to_json(Json& j, const ImagePoint& p);
void to_json(Json& j, const Rect2D& r);
void to_json(Json& j, const VerifyProjection& v);
void to_json(Json& j, const FrameTransferResult& r);

std::string_view to_string(View v) noexcept;
std::string_view to_string(ViewEdge e) noexcept;
std::string_view to_string(BodyEdge e) noexcept;
View parse_view(std::string_view s);          // throws InvalidArgument
ViewEdge parse_view_edge(std::string_view s);  // throws InvalidArgument
BodyEdge parse_body_edge(std::string_view s);  // throws InvalidArgument

/// Parses a wire box. Schema problems throw InvalidArgument and an unknown
/// category name throws UnknownCategory.
AnnotatedBox wire_box_from_json(const Json& j);

}  // namespace flava
