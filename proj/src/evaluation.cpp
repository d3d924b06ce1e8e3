#include "flava/evaluation.hpp"

#include <algorithm>
#include <tuple>

#include <fmt/format.h>
#include <json.hpp>

#include "flava/error.hpp"

namespace flava {

double bev_iou(const Box3D& a, const Box3D& b) {
  const double inter = convex_intersection_area(bev_polygon(a), bev_polygon(b));
  if (inter <= 0.0) return 0.0;
  const double uni = a.size.length * a.size.width + b.size.length * b.size.width - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

namespace {

double vertical_overlap(const Box3D& a, const Box3D& b) noexcept {
  return std::max(0.0, std::min(a.top(), b.top()) - std::max(a.bottom(), b.bottom()));
}

}  // namespace

double iou_3d(const Box3D& a, const Box3D& b) {
  const double dz = vertical_overlap(a, b);
  if (dz <= 0.0) return 0.0;
  const double area = convex_intersection_area(bev_polygon(a), bev_polygon(b));
  if (area <= 0.0) return 0.0;
  const double inter = area * dz;
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double vertical_overlap_factor(const Box3D& a, const Box3D& b) noexcept {
  const double shorter = std::min(a.size.height, b.size.height);
  if (shorter <= 0.0) return 0.0;
  return std::clamp(vertical_overlap(a, b) / shorter, 0.0, 1.0);
}

std::string_view to_string(IouMetric m) noexcept { return m == IouMetric::Bev ? "bev" : "3d"; }
std::string_view to_string(Difficulty d) noexcept { return d == Difficulty::Strict ? "strict" : "easy"; }

Category eval_category(Category c) noexcept {
  return c == Category::PersonSitting ? Category::Pedestrian : c;
}

std::optional<double> iou_threshold(Category c, Difficulty d) noexcept {
  const bool strict = d == Difficulty::Strict;
  switch (eval_category(c)) {
    case Category::Car:
    case Category::Van:
      return strict ? 0.7 : 0.5;
    case Category::Pedestrian:
    case Category::Cyclist:
      return strict ? 0.5 : 0.25;
    default:
      return std::nullopt;
  }
}

MatchResult match_annotations(std::span<const Box3D> preds, std::span<const Box3D> gts, IouMetric metric,
                              double min_iou) {
  struct Candidate {
    double score;
    std::size_t pred;
    std::size_t gt;
    double bev;
    double three_d;
  };
  std::vector<Candidate> candidates;
  std::vector<bool> touches(preds.size(), false);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (eval_category(preds[i].category) != eval_category(gts[j].category)) continue;
      const double bev = bev_iou(preds[i], gts[j]);
      const double vol = bev > 0.0 ? iou_3d(preds[i], gts[j]) : 0.0;
      const double score = metric == IouMetric::Bev ? bev : vol;
      if (score > 0.0) touches[i] = true;
      if (score > 0.0 && score > min_iou) candidates.push_back({score, i, j, bev, vol});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tuple(-a.score, a.pred, a.gt) < std::tuple(-b.score, b.pred, b.gt);
  });

  MatchResult out;
  std::vector<bool> pred_used(preds.size(), false);
  std::vector<bool> gt_used(gts.size(), false);
  for (const Candidate& c : candidates) {
    if (pred_used[c.pred] || gt_used[c.gt]) continue;
    pred_used[c.pred] = gt_used[c.gt] = true;
    out.pairs.push_back({c.pred, c.gt, c.bev, c.three_d});
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (pred_used[i]) continue;
    out.unmatched_preds.push_back(i);
    if (!touches[i]) out.non_intersecting_preds.push_back(i);
  }
  for (std::size_t j = 0; j < gts.size(); ++j) {
    if (!gt_used[j]) out.unmatched_gts.push_back(j);
  }
  return out;
}

std::optional<MeanIou> mean_iou(const MatchResult& match) {
  if (match.pairs.empty()) return std::nullopt;
  MeanIou m;
  for (const MatchPair& p : match.pairs) {
    m.bev += p.bev_iou;
    m.three_d += p.iou_3d;
  }
  const auto n = static_cast<double>(match.pairs.size());
  m.bev /= n;
  m.three_d /= n;
  return m;
}

double degenerate_ap(const ApCounts& c) noexcept {
  if (c.ground_truths == 0 || c.predictions == 0 || c.true_positives == 0) return 0.0;
  // k/10 <= TP/N_gt, compared in integers.
  std::size_t levels = 0;
  for (std::size_t k = 0; k <= 10; ++k) {
    if (k * c.ground_truths <= 10 * c.true_positives) ++levels;
  }
  const double precision = static_cast<double>(c.true_positives) / static_cast<double>(c.predictions);
  return precision * static_cast<double>(levels) / 11.0;
}

std::map<Category, ApCounts> ap_counts(std::span<const Box3D> preds, std::span<const Box3D> gts,
                                       Difficulty difficulty, IouMetric metric) {
  std::map<Category, ApCounts> out;
  for (const Category c : kApCategories) {
    std::vector<Box3D> p;
    std::vector<Box3D> g;
    for (const Box3D& b : preds) {
      if (eval_category(b.category) == c) p.push_back(b);
    }
    for (const Box3D& b : gts) {
      if (eval_category(b.category) == c) g.push_back(b);
    }
    if (p.empty() && g.empty()) continue;
    const MatchResult m = match_annotations(p, g, metric, *iou_threshold(c, difficulty));
    out[c] = {m.pairs.size(), p.size(), g.size()};
  }
  return out;
}

std::map<Category, double> average_precision(std::span<const Box3D> preds, std::span<const Box3D> gts,
                                             Difficulty difficulty, IouMetric metric) {
  std::map<Category, double> out;
  for (const auto& [c, counts] : ap_counts(preds, gts, difficulty, metric)) {
    if (counts.ground_truths > 0) out[c] = degenerate_ap(counts);
  }
  return out;
}

namespace {

void accumulate(std::map<Category, ApCounts>& total, const std::map<Category, ApCounts>& frame) {
  for (const auto& [c, n] : frame) {
    ApCounts& t = total[c];
    t.true_positives += n.true_positives;
    t.predictions += n.predictions;
    t.ground_truths += n.ground_truths;
  }
}

double pooled_ap(const std::map<Category, ApCounts>& counts, Category c) {
  const auto it = counts.find(c);
  return it == counts.end() ? 0.0 : degenerate_ap(it->second);
}

struct IouSums {
  double bev = 0.0;
  double three_d = 0.0;
  std::size_t n = 0;

  void add(const MatchPair& p) {
    bev += p.bev_iou;
    three_d += p.iou_3d;
    ++n;
  }
  std::optional<MeanIou> mean() const {
    if (n == 0) return std::nullopt;
    return MeanIou{bev / static_cast<double>(n), three_d / static_cast<double>(n)};
  }
};

}  // namespace

EvalReport evaluate(const FrameSet& preds, const FrameSet& gts, const std::optional<std::set<int>>& frames) {
  if (frames) {
    for (const FrameSet* side : {&preds, &gts}) {
      for (const auto& [f, boxes] : *side) {
        if (!boxes.empty() && !frames->contains(f)) {
          throw Error(ErrorCode::FrameMismatch,
                      fmt::format("frame {} is not part of the sequence", f));
        }
      }
    }
  }
  std::set<int> all;
  for (const auto& [f, b] : preds) all.insert(f);
  for (const auto& [f, b] : gts) all.insert(f);

  EvalReport report;
  report.frames = all.size();
  IouSums total;
  std::map<Category, IouSums> per_class_iou;
  std::map<Category, std::size_t> gt_count;
  std::map<Category, std::size_t> pred_count;
  std::map<Category, ApCounts> bev_strict, bev_easy, vol_strict, vol_easy;
  const std::vector<Box3D> none;

  for (const int f : all) {
    const auto pit = preds.find(f);
    const auto git = gts.find(f);
    const std::vector<Box3D>& p = pit == preds.end() ? none : pit->second;
    const std::vector<Box3D>& g = git == gts.end() ? none : git->second;

    const MatchResult m = match_annotations(p, g, IouMetric::ThreeD);
    report.predictions += p.size();
    report.ground_truths += g.size();
    report.pairs += m.pairs.size();
    report.unmatched_preds += m.unmatched_preds.size();
    report.unmatched_gts += m.unmatched_gts.size();
    report.non_intersecting_preds += m.non_intersecting_preds.size();
    for (const MatchPair& pair : m.pairs) {
      total.add(pair);
      per_class_iou[eval_category(g[pair.gt].category)].add(pair);
    }
    for (const Box3D& b : p) ++pred_count[eval_category(b.category)];
    for (const Box3D& b : g) ++gt_count[eval_category(b.category)];

    accumulate(bev_strict, ap_counts(p, g, Difficulty::Strict, IouMetric::Bev));
    accumulate(bev_easy, ap_counts(p, g, Difficulty::Easy, IouMetric::Bev));
    accumulate(vol_strict, ap_counts(p, g, Difficulty::Strict, IouMetric::ThreeD));
    accumulate(vol_easy, ap_counts(p, g, Difficulty::Easy, IouMetric::ThreeD));
  }

  report.mean = total.mean();
  ApColumns ap_sum;
  std::size_t ap_classes = 0;
  for (const auto& [c, n] : gt_count) {
    ClassReport& cr = report.classes[c];
    cr.ground_truths = n;
    cr.predictions = pred_count.contains(c) ? pred_count.at(c) : 0;
    const auto iou = per_class_iou.find(c);
    if (iou != per_class_iou.end()) {
      cr.pairs = iou->second.n;
      cr.mean = iou->second.mean();
    }
    if (iou_threshold(c, Difficulty::Strict)) {
      cr.ap = ApColumns{pooled_ap(bev_strict, c), pooled_ap(bev_easy, c), pooled_ap(vol_strict, c),
                        pooled_ap(vol_easy, c)};
      ap_sum.bev_strict += cr.ap->bev_strict;
      ap_sum.bev_easy += cr.ap->bev_easy;
      ap_sum.three_d_strict += cr.ap->three_d_strict;
      ap_sum.three_d_easy += cr.ap->three_d_easy;
      ++ap_classes;
    }
  }
  if (ap_classes > 0) {
    const auto n = static_cast<double>(ap_classes);
    report.mean_ap = ApColumns{ap_sum.bev_strict / n, ap_sum.bev_easy / n, ap_sum.three_d_strict / n,
                               ap_sum.three_d_easy / n};
  }
  return report;
}

FrameSet frames_from_labels(std::span<const LabelRecord> labels, const Calibration& calib) {
  FrameSet out;
  for (const LabelRecord& l : labels) out[l.frame].push_back(box_from_label(l, calib));
  return out;
}

FrameSet frames_from_session(const FrameBoxes& boxes) {
  FrameSet out;
  for (const auto& [frame, list] : boxes) {
    auto& dst = out[frame];
    for (const AnnotatedBox& b : list) dst.push_back(b.box);
  }
  return out;
}

namespace {

using OJson = nlohmann::ordered_json;

OJson mean_json(const std::optional<MeanIou>& m) {
  if (!m) return OJson{{"bev_iou", nullptr}, {"iou_3d", nullptr}};
  return OJson{{"bev_iou", m->bev}, {"iou_3d", m->three_d}};
}

OJson ap_json(const ApColumns& a) {
  return OJson{{"bev_strict", a.bev_strict},
               {"bev_easy", a.bev_easy},
               {"3d_strict", a.three_d_strict},
               {"3d_easy", a.three_d_easy}};
}

std::string percent(double v) { return fmt::format("{:.2f}", 100.0 * v); }

std::string percent(const std::optional<double>& v) { return v ? percent(*v) : "absent"; }

}  // namespace

std::string report_to_json(const EvalReport& r) {
  OJson classes = OJson::object();
  for (const auto& [c, cr] : r.classes) {
    OJson entry{{"ground_truths", cr.ground_truths},
                {"predictions", cr.predictions},
                {"pairs", cr.pairs},
                {"mean", mean_json(cr.mean)}};
    entry["ap"] = cr.ap ? ap_json(*cr.ap) : OJson(nullptr);
    classes[std::string(to_string(c))] = std::move(entry);
  }
  OJson doc{{"frames", r.frames},
            {"predictions", r.predictions},
            {"ground_truths", r.ground_truths},
            {"pairs", r.pairs},
            {"unmatched_preds", r.unmatched_preds},
            {"unmatched_gts", r.unmatched_gts},
            {"non_intersecting_preds", r.non_intersecting_preds},
            {"mean", mean_json(r.mean)},
            {"classes", std::move(classes)}};
  doc["mean_ap"] = r.mean_ap ? ap_json(*r.mean_ap) : OJson(nullptr);
  return doc.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& r, std::string_view generated) {
  std::string out;
  if (!generated.empty()) out += fmt::format("# generated {}\n", generated);
  out += fmt::format("frames {}  predictions {}  ground truths {}  pairs {}  non-intersecting {}\n\n",
                     r.frames, r.predictions, r.ground_truths, r.pairs, r.non_intersecting_preds);

  constexpr std::string_view kRow = "{:<14} {:>5} {:>5} {:>12} {:>12} {:>14} {:>14} {:>14} {:>14}\n";
  out += fmt::format(kRow, "class", "gt", "pred", "BEV IoU (%)", "3D IoU (%)", "BEV AP (str)",
                     "BEV AP (easy)", "3D AP (str)", "3D AP (easy)");
  auto row = [&](std::string_view name, std::string gt, std::string pred, const std::optional<MeanIou>& m,
                 const std::optional<ApColumns>& ap) {
    const auto bev = m ? std::optional(m->bev) : std::nullopt;
    const auto vol = m ? std::optional(m->three_d) : std::nullopt;
    auto col = [&](double ApColumns::*field) { return ap ? percent((*ap).*field) : std::string("-"); };
    out += fmt::format(kRow, name, gt, pred, percent(bev), percent(vol), col(&ApColumns::bev_strict),
                       col(&ApColumns::bev_easy), col(&ApColumns::three_d_strict),
                       col(&ApColumns::three_d_easy));
  };
  for (const auto& [c, cr] : r.classes) {
    row(to_string(c), std::to_string(cr.ground_truths), std::to_string(cr.predictions), cr.mean, cr.ap);
  }
  row("all", std::to_string(r.ground_truths), std::to_string(r.predictions), r.mean, r.mean_ap);
  return out;
}

}  // namespace flava
