#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flava/calibration.hpp"
#include "flava/geometry.hpp"
#include "flava/point_cloud.hpp"
#include "flava/types.hpp"

namespace flava {

// ---------------------------------------------------------------------------
// Velodyne clouds: N records of four little-endian float32 (x, y, z, r).

inline constexpr std::size_t kPointRecordBytes = 16;

/// Throws MissingFile, MalformedLength (size % 16 != 0) or NonFiniteValue
/// (message carries the first offending record index and the total count).
PointCloud load_point_cloud(const std::filesystem::path& path);
PointCloud decode_point_cloud(std::span<const std::byte> bytes);
std::vector<std::byte> encode_point_cloud(const PointCloud& cloud);
void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Calibration: "KEY: v1 v2 ..." lines. The colon is optional (KITTI tracking
// calib files omit it for R_rect and Tr_velo_cam).

/// Reads P<camera> (12 values), R0_rect or R_rect (9) and Tr_velo_to_cam or
/// Tr_velo_cam (12). Throws MissingKey, WrongValueCount, NonOrthonormalRotation
/// (deviation beyond 1e-4) or MissingFile.
Calibration load_calibration(const std::filesystem::path& path, int camera = 2);
Calibration parse_calibration(std::string_view text, int camera = 2);
/// Writes P0..P3 (P<camera> = p_rect, others copies), R0_rect and Tr_velo_to_cam.
std::string format_calibration(const Calibration& calib);

inline constexpr double kCalibrationLoadTolerance = 1e-4;

// ---------------------------------------------------------------------------
// KITTI tracking labels:
//   frame track_id type truncated occluded alpha left top right bottom
//   h w l x y z rotation_y
// Location is the bottom center in the rectified camera frame.

struct LabelRecord {
  int frame = 0;
  int track_id = 0;
  Category category = Category::Car;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = -10.0;
  std::array<double, 4> bbox2d = {-1.0, -1.0, -1.0, -1.0};
  double height = 1.0;
  double width = 1.0;
  double length = 1.0;
  Eigen::Vector3d location = Eigen::Vector3d::Zero();
  double rotation_y = 0.0;

  bool valid() const noexcept;
};

/// DontCare lines are skipped; any other unknown type is UnknownCategory.
/// Malformed lines throw MalformedLine with the 1-based line number.
std::vector<LabelRecord> read_labels(const std::filesystem::path& path);
std::vector<LabelRecord> parse_labels(std::string_view text);

/// Four-decimal fixed point. Throws InvalidBox on records violating the type
/// invariants.
void write_labels(std::span<const LabelRecord> records, const std::filesystem::path& path);
std::string format_labels(std::span<const LabelRecord> records);

/// Velodyne box -> camera-frame label. Location is the rectified-camera image
/// of the bottom center; rotation_y = normalize(-yaw - pi/2). Pass-through
/// fields get sentinels (truncated 0, occluded 0, alpha -10). With
/// project_bbox, bbox2d is the projected hull of the corners when any corner
/// is in front of the camera; otherwise it stays at the -1 sentinel.
LabelRecord label_from_box(const Box3D& box, const Calibration& calib, int frame,
                           bool project_bbox = true);
/// Inverse of label_from_box on the geometric fields.
Box3D box_from_label(const LabelRecord& label, const Calibration& calib);

// ---------------------------------------------------------------------------
// Sequences on disk:
//   <root>/<sequence>/calib.txt
//   <root>/<sequence>/velodyne/<frame>.bin
//   <root>/<sequence>/image/<frame>.{png,jpg}     (optional)

struct FrameRef {
  int index = 0;
  std::filesystem::path cloud;
  std::filesystem::path image;  // empty when the frame has no image

  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

struct SequenceDescriptor {
  std::string id;
  std::filesystem::path directory;
  std::vector<FrameRef> frames;  // strictly increasing index
  Calibration calibration;

  std::size_t frame_count() const noexcept { return frames.size(); }
  bool has_frame(int index) const noexcept;
  const FrameRef& frame(int index) const;  // throws UnknownFrame
  std::vector<int> frame_indices() const;

  friend bool operator==(const SequenceDescriptor&, const SequenceDescriptor&) = default;
};

/// Throws on a missing calib.txt, unparsable calibration, missing velodyne
/// directory or non-numeric frame names.
SequenceDescriptor load_sequence(const std::filesystem::path& directory);

struct SkippedSequence {
  std::string id;
  std::string reason;
};

struct DataRoot {
  std::vector<SequenceDescriptor> sequences;  // sorted by id
  std::vector<SkippedSequence> skipped;
};

/// Every immediate subdirectory is a candidate sequence; invalid ones are
/// reported in `skipped`. Throws Io when the root itself is unreadable.
DataRoot scan_data_root(const std::filesystem::path& root);

}  // namespace flava
