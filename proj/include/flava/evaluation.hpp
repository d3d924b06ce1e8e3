#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flava/annotation.hpp"
#include "flava/geometry.hpp"
#include "flava/kitti_io.hpp"
#include "flava/types.hpp"

namespace flava {

double bev_iou(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

/// Length of the shared z interval divided by the shorter height, in [0, 1].
double vertical_overlap_factor(const Box3D& a, const Box3D& b) noexcept;

enum class IouMetric { Bev, ThreeD };
enum class Difficulty { Strict, Easy };

std::string_view to_string(IouMetric m) noexcept;
std::string_view to_string(Difficulty d) noexcept;

/// Person_sitting evaluates as Pedestrian; everything else is unchanged.
Category eval_category(Category c) noexcept;

/// TP threshold for a class, or nullopt for classes without one (Truck, Tram,
/// Misc). A prediction counts when its IoU is strictly greater.
std::optional<double> iou_threshold(Category c, Difficulty d) noexcept;

inline constexpr std::array<Category, 4> kApCategories = {Category::Car, Category::Van,
                                                          Category::Pedestrian, Category::Cyclist};

struct MatchPair {
  std::size_t pred = 0;
  std::size_t gt = 0;
  double bev_iou = 0.0;
  double iou_3d = 0.0;
  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // in selection order
  std::vector<std::size_t> unmatched_preds;
  std::vector<std::size_t> unmatched_gts;
  std::vector<std::size_t> non_intersecting_preds;  // subset of unmatched_preds
};

/// Greedy one-to-one matching over same-category pairs whose `metric` IoU
/// exceeds `min_iou` (0 by default). Selection runs in descending IoU; ties go
/// to the lower pred index, then the lower gt index.
MatchResult match_annotations(std::span<const Box3D> preds, std::span<const Box3D> gts,
                              IouMetric metric = IouMetric::ThreeD, double min_iou = 0.0);

struct MeanIou {
  double bev = 0.0;
  double three_d = 0.0;
};

/// Absent when there are no pairs.
std::optional<MeanIou> mean_iou(const MatchResult& match);

struct ApCounts {
  std::size_t true_positives = 0;
  std::size_t predictions = 0;
  std::size_t ground_truths = 0;
};

/// P * |{k in 0..10 : k/10 <= R}| / 11 with P = TP/preds and R = TP/gts.
double degenerate_ap(const ApCounts& counts) noexcept;

/// Per-class TP/prediction/ground-truth counts at the class thresholds. Keys
/// are every thresholded class seen on either side.
std::map<Category, ApCounts> ap_counts(std::span<const Box3D> preds, std::span<const Box3D> gts,
                                       Difficulty difficulty, IouMetric metric);

/// Per-class AP over one frame's boxes. Classes without ground truth or
/// without a threshold are omitted.
std::map<Category, double> average_precision(std::span<const Box3D> preds, std::span<const Box3D> gts,
                                             Difficulty difficulty, IouMetric metric);

using FrameSet = std::map<int, std::vector<Box3D>>;

struct ApColumns {
  double bev_strict = 0.0;
  double bev_easy = 0.0;
  double three_d_strict = 0.0;
  double three_d_easy = 0.0;
};

struct ClassReport {
  std::size_t ground_truths = 0;
  std::size_t predictions = 0;
  std::size_t pairs = 0;
  std::optional<MeanIou> mean;
  std::optional<ApColumns> ap;  // absent for classes without thresholds
};

struct EvalReport {
  std::size_t frames = 0;
  std::size_t predictions = 0;
  std::size_t ground_truths = 0;
  std::size_t pairs = 0;
  std::size_t unmatched_preds = 0;
  std::size_t unmatched_gts = 0;
  std::size_t non_intersecting_preds = 0;
  std::optional<MeanIou> mean;
  std::map<Category, ClassReport> classes;  // classes present in gt, after folding
  std::optional<ApColumns> mean_ap;         // mean over classes that have AP
};

/// Groups labels by frame in the velodyne frame of `calib`.
FrameSet frames_from_labels(std::span<const LabelRecord> labels, const Calibration& calib);
FrameSet frames_from_session(const FrameBoxes& boxes);

/// Matches frame by frame and pools the counts. When `frames` is given, every
/// frame of preds and gts must belong to it (FrameMismatch otherwise).
EvalReport evaluate(const FrameSet& preds, const FrameSet& gts,
                    const std::optional<std::set<int>>& frames = std::nullopt);

/// Machine-readable JSON document. Deterministic for fixed inputs.
std::string report_to_json(const EvalReport& report);

/// Aligned table with percentages. The only time-dependent line is the first
/// ("# generated ...") and only when `generated` is non-empty.
std::string report_to_table(const EvalReport& report, std::string_view generated = {});

}  // namespace flava
