#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace flava {

using Matrix34 = Eigen::Matrix<double, 3, 4>;

/// Velodyne-to-image camera model.
///
/// A velodyne point x maps to the image through p_rect * r_rect * t_velo_cam * x.
/// r_rect is the 3x3 rectifying rotation padded to 4x4 with a zero fourth
/// row/column and (3,3) = 1; t_velo_cam is rigid with last row (0,0,0,1).
struct Calibration {
  Matrix34 p_rect = Matrix34::Zero();
  Eigen::Matrix4d r_rect = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d t_velo_cam = Eigen::Matrix4d::Identity();

  /// p_rect = [I | 0], r_rect = I, t_velo_cam = I.
  static Calibration identity();

  /// Identity intrinsics with the usual KITTI axis permutation
  /// (velodyne x forward -> camera z, y left -> -x, z up -> -y). Used when
  /// labels must be converted without a calibration file at hand.
  static Calibration canonical();

  /// Full 3x4 velodyne-to-image projection.
  Matrix34 projection() const { return p_rect * r_rect * t_velo_cam; }

  /// Velodyne to rectified camera frame (the frame KITTI labels live in).
  Eigen::Matrix4d velo_to_rect() const { return r_rect * t_velo_cam; }

  /// Largest deviation from the structural invariants: orthonormal rotation
  /// blocks, rigid last rows, r_rect padding.
  double invariant_error() const;

  friend bool operator==(const Calibration& a, const Calibration& b) {
    return a.p_rect == b.p_rect && a.r_rect == b.r_rect && a.t_velo_cam == b.t_velo_cam;
  }
};

}  // namespace flava
