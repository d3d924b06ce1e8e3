#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "flava/calibration.hpp"
#include "flava/geometry.hpp"
#include "flava/kitti_io.hpp"
#include "flava/point_cloud.hpp"
#include "flava/types.hpp"

namespace flava {

// ---------------------------------------------------------------------------
// Anchors and automatic height

/// Per-category reference box size, used when the height cannot be derived
/// from the cloud.
struct AnchorTable {
  std::map<Category, BoxSize> sizes;

  /// Conventional KITTI mean sizes (length, width, height) in meters.
  static AnchorTable defaults();
  const BoxSize& at(Category c) const;  // throws InvalidArgument when absent
  void validate() const;                // throws InvalidArgument

  friend bool operator==(const AnchorTable&, const AnchorTable&) = default;
};

/// JSON object {"Car": [l, w, h], ...}; unlisted categories keep defaults.
AnchorTable load_anchor_table(const std::filesystem::path& path);

struct ClipPercentiles {
  double low = 0.0;
  double high = 100.0;

  bool valid() const noexcept { return low >= 0.0 && low < high && high <= 100.0; }
};

struct HeightEstimate {
  double center_z = 0.0;
  double height = 0.0;
};

/// Vertical extent of the points inside the footprint, between the given
/// percentiles of their z values (linear interpolation between order
/// statistics; (0, 100) is the strict min/max). Throws InsufficientPoints
/// below two points and ZeroHeight when the span is under 1e-3 m.
HeightEstimate auto_height(const PointCloud& cloud, const BevPolygon& footprint,
                           ClipPercentiles clip = {});

// ---------------------------------------------------------------------------
// Projected-view edits
//
// The front view looks at the object from ahead of it: screen-right is the
// object's left (+y body axis). The side view looks from the object's right
// side: screen-right is its heading (+x body axis). In both views up is +z.

enum class View { Front, Side };
enum class ViewEdge { Left, Right, Top, Bottom };

/// Moves one face of the box outward by delta (negative shrinks).
struct EdgeMove {
  ViewEdge edge = ViewEdge::Right;
  double delta = 0.0;

  friend bool operator==(const EdgeMove&, const EdgeMove&) = default;
};

/// Translates the whole box along the view's horizontal body axis and +z.
struct ViewShift {
  double horizontal = 0.0;
  double vertical = 0.0;

  friend bool operator==(const ViewShift&, const ViewShift&) = default;
};

struct ViewEdit {
  View view = View::Front;
  std::variant<EdgeMove, ViewShift> change;

  bool touches_height() const noexcept;
  friend bool operator==(const ViewEdit&, const ViewEdit&) = default;
};

/// Same edit with the opposite sign.
ViewEdit negated(const ViewEdit& edit);

/// Applies the edit in the box's own frame and rotates the result back about
/// the original center. Throws DegenerateResult when a dimension would drop
/// to 1e-3 m or below.
Box3D apply_view_edit(const Box3D& box, const ViewEdit& edit);

// ---------------------------------------------------------------------------
// Verification

struct VerifyProjection {
  std::array<ImagePoint, 8> vertices;  // box_corners order
  Rect2D hull;                         // over in-front vertices only
};

/// Throws AllBehindCamera when no corner is in front of the camera.
VerifyProjection verify_projection(const Calibration& calib, const Box3D& box);

// ---------------------------------------------------------------------------
// Actions and the operation log

enum class OpKind {
  Locate,
  Shift,
  Rotate,
  ResizeBev,
  AdjustHeight,
  TransferObject,
  TransferFrame,
  Delete,
  VerifyMark,
};

inline constexpr OpKind kAllOpKinds[] = {
    OpKind::Locate,         OpKind::Shift,         OpKind::Rotate,
    OpKind::ResizeBev,      OpKind::AdjustHeight,  OpKind::TransferObject,
    OpKind::TransferFrame,  OpKind::Delete,        OpKind::VerifyMark};

std::string_view to_string(OpKind kind) noexcept;
std::optional<OpKind> parse_op_kind(std::string_view name) noexcept;

/// Box faces in the ground plane, named from the object's point of view.
enum class BodyEdge { Front, Rear, Left, Right };

struct BevShift {
  double dx = 0.0;  // velodyne frame
  double dy = 0.0;
  friend bool operator==(const BevShift&, const BevShift&) = default;
};
struct BevRotate {
  double dtheta = 0.0;  // about the box center, counter-clockwise
  friend bool operator==(const BevRotate&, const BevRotate&) = default;
};
struct BevResize {
  BodyEdge edge = BodyEdge::Front;
  double delta = 0.0;
  friend bool operator==(const BevResize&, const BevResize&) = default;
};
using BevAction = std::variant<BevShift, BevRotate, BevResize>;

struct CreateBox {
  int frame = 0;
  BevFootprint footprint;
  Category category = Category::Car;
  friend bool operator==(const CreateBox&, const CreateBox&) = default;
};
struct AdjustBox {
  int frame = 0;
  int track_id = 0;
  BevAction action;
  friend bool operator==(const AdjustBox&, const AdjustBox&) = default;
};
struct EditBox {
  int frame = 0;
  int track_id = 0;
  ViewEdit edit;
  friend bool operator==(const EditBox&, const EditBox&) = default;
};
struct SetHeightLock {
  int frame = 0;
  int track_id = 0;
  bool locked = true;
  friend bool operator==(const SetHeightLock&, const SetHeightLock&) = default;
};
struct CopyObject {
  int frame = 0;
  int source_track_id = 0;
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const CopyObject&, const CopyObject&) = default;
};
struct CopyFrame {
  int from_frame = 0;
  int to_frame = 0;
  friend bool operator==(const CopyFrame&, const CopyFrame&) = default;
};
struct DeleteBox {
  int frame = 0;
  int track_id = 0;
  friend bool operator==(const DeleteBox&, const DeleteBox&) = default;
};

/// Every mutation a session accepts.
using Action =
    std::variant<CreateBox, AdjustBox, EditBox, SetHeightLock, CopyObject, CopyFrame, DeleteBox>;

/// One log entry. The entry a mutating call produces first carries the
/// action so the log can be replayed; derived entries (the per-box events of
/// a frame transfer) leave it empty. Frame-level events use track_id -1.
struct OperationEvent {
  OpKind kind = OpKind::Locate;
  int frame = 0;
  int track_id = -1;
  double timestamp = 0.0;  // seconds
  std::optional<Action> action;

  friend bool operator==(const OperationEvent&, const OperationEvent&) = default;
};

// ---------------------------------------------------------------------------
// Session

struct AnnotatedBox {
  Box3D box;
  bool height_locked = false;
  bool height_defaulted = false;  // anchor height used because auto height failed

  friend bool operator==(const AnnotatedBox&, const AnnotatedBox&) = default;
};

struct EngineConfig {
  AnchorTable anchors = AnchorTable::defaults();
  ClipPercentiles clip;
};

struct FrameTransferResult {
  std::vector<Box3D> copied;
  std::vector<int> conflicts;  // track ids already present in the target frame
};

struct MutationResult {
  std::optional<AnnotatedBox> box;
  std::optional<FrameTransferResult> transfer;
};

/// Supplies the cloud of a frame; only box creation needs one.
using CloudProvider = std::function<std::shared_ptr<const PointCloud>(int frame)>;

using FrameBoxes = std::map<int, std::vector<AnnotatedBox>>;

/// Annotation state of one sequence.
///
/// Single writer: mutating calls must be serialized by the caller. Track ids
/// are unique per frame and are shared by the copies of an object across
/// frames. Each mutating call appends exactly one action-carrying event to
/// the log (frame transfer additionally appends one event per copied box),
/// and all events of one call share a timestamp.
class AnnotationSession {
 public:
  using Clock = std::function<double()>;

  explicit AnnotationSession(SequenceDescriptor sequence, EngineConfig config = {},
                             Clock clock = {});

  /// Rebuilds a session from persisted state after checking its invariants;
  /// throws InvalidArgument describing the first violation.
  static AnnotationSession restore(SequenceDescriptor sequence, FrameBoxes boxes,
                                   std::vector<OperationEvent> log, int next_track_id,
                                   EngineConfig config = {}, Clock clock = {});

  const SequenceDescriptor& sequence() const noexcept { return sequence_; }
  const EngineConfig& config() const noexcept { return config_; }
  const FrameBoxes& frames() const noexcept { return boxes_; }
  std::span<const AnnotatedBox> boxes(int frame) const;
  std::optional<AnnotatedBox> find(int frame, int track_id) const;
  std::span<const OperationEvent> log() const noexcept { return log_; }
  int next_track_id() const noexcept { return next_track_id_; }
  std::size_t box_count() const noexcept;

  AnnotatedBox create_box_from_bev(int frame, const PointCloud& cloud, const BevFootprint& footprint,
                                   Category category);
  AnnotatedBox adjust_bev(int frame, int track_id, const BevAction& action);
  AnnotatedBox view_edit(int frame, int track_id, const ViewEdit& edit);
  AnnotatedBox lock_height(int frame, int track_id, bool locked);
  AnnotatedBox transfer_inter_object(int frame, int source_track_id, double x, double y);
  FrameTransferResult transfer_inter_frame(int from_frame, int to_frame);
  void remove_box(int frame, int track_id);

  /// Dispatches to the named operation; `clouds` is consulted for CreateBox.
  MutationResult apply(const Action& action, const CloudProvider& clouds);

  friend bool operator==(const AnnotationSession& a, const AnnotationSession& b) {
    return a.sequence_ == b.sequence_ && a.boxes_ == b.boxes_ && a.log_ == b.log_ &&
           a.next_track_id_ == b.next_track_id_;
  }

 private:
  void require_frame(int frame) const;
  AnnotatedBox& entry(int frame, int track_id);
  void log_event(OpKind kind, int frame, int track_id, double timestamp,
                 std::optional<Action> action);

  SequenceDescriptor sequence_;
  EngineConfig config_;
  Clock clock_;
  FrameBoxes boxes_;
  std::vector<OperationEvent> log_;
  int next_track_id_ = 0;
};

/// Re-applies the action-carrying events of `log` to `initial`, reusing each
/// event's timestamp, and returns the resulting session.
AnnotationSession replay(const AnnotationSession& initial, std::span<const OperationEvent> log,
                         const CloudProvider& clouds);

// ---------------------------------------------------------------------------
// Operation statistics

struct InstanceKey {
  int frame = 0;
  int track_id = 0;
  friend auto operator<=>(const InstanceKey&, const InstanceKey&) = default;
};

using KindCounts = std::map<OpKind, std::size_t>;
using KindMeans = std::map<OpKind, double>;

struct OperationStats {
  KindCounts per_kind;  // every kind present, zeros included
  std::map<InstanceKey, KindCounts> per_instance;
  std::set<InstanceKey> transferred;  // instances whose first event is a transfer
  KindMeans mean_all;
  KindMeans mean_transferred;
  KindMeans mean_manual;
};

OperationStats operation_stats(std::span<const OperationEvent> log);

}  // namespace flava
