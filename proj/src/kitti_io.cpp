#include "flava/kitti_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <Eigen/LU>
#include <fmt/format.h>

#include "flava/annotation.hpp"
#include "flava/error.hpp"

namespace flava {
namespace fs = std::filesystem;

namespace {

std::vector<std::byte> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw Error(ErrorCode::Io, "short read on " + path.string());
  }
  return bytes;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw Error(ErrorCode::Io, "cannot write " + path.string());
  }
}

float float_from_le(const std::byte* p) noexcept {
  const std::uint32_t bits = std::to_integer<std::uint32_t>(p[0]) |
                             (std::to_integer<std::uint32_t>(p[1]) << 8) |
                             (std::to_integer<std::uint32_t>(p[2]) << 16) |
                             (std::to_integer<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void float_to_le(float value, std::byte* p) noexcept {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::byte>((bits >> (8 * i)) & 0xFFu);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view token, T& out) {
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

double orthonormality_error(const Eigen::Matrix3d& r) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace

// --- point clouds ----------------------------------------------------------

PointCloud decode_point_cloud(std::span<const std::byte> bytes) {
  if (bytes.size() % kPointRecordBytes != 0) {
    throw Error(ErrorCode::MalformedLength, "cloud byte length " + std::to_string(bytes.size()) +
                                                " is not a multiple of 16");
  }
  const std::size_t n = bytes.size() / kPointRecordBytes;
  PointCloud cloud;
  cloud.points.resize(n);
  std::size_t bad = 0;
  std::size_t first_bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::byte* rec = bytes.data() + i * kPointRecordBytes;
    LidarPoint& p = cloud.points[i];
    p.x = float_from_le(rec);
    p.y = float_from_le(rec + 4);
    p.z = float_from_le(rec + 8);
    p.reflectance = float_from_le(rec + 12);
    if (!(std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z) &&
          std::isfinite(p.reflectance))) {
      if (bad++ == 0) first_bad = i;
    }
  }
  if (bad > 0) {
    throw Error(ErrorCode::NonFiniteValue, "record " + std::to_string(first_bad) +
                                               " is not finite (" + std::to_string(bad) +
                                               " offending records)");
  }
  return cloud;
}

PointCloud load_point_cloud(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::MissingFile, path.string());
  const std::vector<std::byte> bytes = read_bytes(path);
  return decode_point_cloud(bytes);
}

std::vector<std::byte> encode_point_cloud(const PointCloud& cloud) {
  std::vector<std::byte> bytes(cloud.size() * kPointRecordBytes);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    std::byte* rec = bytes.data() + i * kPointRecordBytes;
    const LidarPoint& p = cloud.points[i];
    float_to_le(p.x, rec);
    float_to_le(p.y, rec + 4);
    float_to_le(p.z, rec + 8);
    float_to_le(p.reflectance, rec + 12);
  }
  return bytes;
}

void save_point_cloud(const PointCloud& cloud, const fs::path& path) {
  const std::vector<std::byte> bytes = encode_point_cloud(cloud);
  write_text(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// --- calibration -------------------------------------------------------------

Calibration Calibration::identity() {
  Calibration c;
  c.p_rect.setZero();
  c.p_rect.leftCols<3>().setIdentity();
  return c;
}

Calibration Calibration::canonical() {
  Calibration c = identity();
  c.t_velo_cam << 0, -1, 0, 0,
                  0, 0, -1, 0,
                  1, 0, 0, 0,
                  0, 0, 0, 1;
  return c;
}

double Calibration::invariant_error() const {
  double err = orthonormality_error(r_rect.topLeftCorner<3, 3>());
  err = std::max(err, orthonormality_error(t_velo_cam.topLeftCorner<3, 3>()));
  const Eigen::RowVector4d unit_row(0, 0, 0, 1);
  err = std::max(err, (t_velo_cam.row(3) - unit_row).cwiseAbs().maxCoeff());
  err = std::max(err, (r_rect.row(3) - unit_row).cwiseAbs().maxCoeff());
  err = std::max(err, (r_rect.col(3) - unit_row.transpose()).cwiseAbs().maxCoeff());
  return err;
}

Calibration parse_calibration(std::string_view text, int camera) {
  std::map<std::string, std::vector<std::string_view>, std::less<>> entries;
  for (std::string_view line : split_lines(text)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    const auto sep = line.find_first_of(": \t");
    const std::string_view key_view = line.substr(0, sep);
    if (key_view.empty()) continue;
    std::string key(key_view);
    auto tokens = split_ws(sep == std::string_view::npos ? std::string_view{} : line.substr(sep + 1));
    entries.emplace(std::move(key), std::move(tokens));
  }

  auto values_for = [&](std::initializer_list<std::string_view> aliases,
                        std::size_t expected) -> std::vector<double> {
    for (std::string_view alias : aliases) {
      auto it = entries.find(alias);
      if (it == entries.end()) continue;
      if (it->second.size() != expected) {
        throw Error(ErrorCode::WrongValueCount,
                    fmt::format("{} has {} values, expected {}", alias, it->second.size(), expected));
      }
      std::vector<double> out(expected);
      for (std::size_t i = 0; i < expected; ++i) {
        if (!parse_number(it->second[i], out[i]) || !std::isfinite(out[i])) {
          throw Error(ErrorCode::WrongValueCount,
                      fmt::format("{} value {} is not a finite number", alias, i));
        }
      }
      return out;
    }
    std::string names;
    for (std::string_view alias : aliases) names += (names.empty() ? "" : "/") + std::string(alias);
    throw Error(ErrorCode::MissingKey, names);
  };

  const std::string p_key = "P" + std::to_string(camera);
  const std::vector<double> p = values_for({p_key}, 12);
  const std::vector<double> r = values_for({"R0_rect", "R_rect"}, 9);
  const std::vector<double> t = values_for({"Tr_velo_to_cam", "Tr_velo_cam"}, 12);

  Calibration calib;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) calib.p_rect(i, j) = p[static_cast<std::size_t>(i * 4 + j)];
  }
  calib.r_rect.setIdentity();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) calib.r_rect(i, j) = r[static_cast<std::size_t>(i * 3 + j)];
  }
  calib.t_velo_cam.setIdentity();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) calib.t_velo_cam(i, j) = t[static_cast<std::size_t>(i * 4 + j)];
  }

  const double r_err = orthonormality_error(calib.r_rect.topLeftCorner<3, 3>());
  if (r_err > kCalibrationLoadTolerance) {
    throw Error(ErrorCode::NonOrthonormalRotation, fmt::format("R_rect deviates by {:.3g}", r_err));
  }
  const double t_err = orthonormality_error(calib.t_velo_cam.topLeftCorner<3, 3>());
  if (t_err > kCalibrationLoadTolerance) {
    throw Error(ErrorCode::NonOrthonormalRotation,
                fmt::format("Tr_velo_to_cam rotation deviates by {:.3g}", t_err));
  }
  return calib;
}

Calibration load_calibration(const fs::path& path, int camera) {
  return parse_calibration(read_text(path), camera);
}

std::string format_calibration(const Calibration& calib) {
  auto row_major = [](const auto& m, int rows, int cols) {
    std::string s;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) s += fmt::format(" {:.12e}", m(i, j));
    }
    return s;
  };
  std::string out;
  for (int cam = 0; cam < 4; ++cam) out += fmt::format("P{}:{}\n", cam, row_major(calib.p_rect, 3, 4));
  out += "R0_rect:" + row_major(calib.r_rect, 3, 3) + "\n";
  out += "Tr_velo_to_cam:" + row_major(calib.t_velo_cam, 3, 4) + "\n";
  return out;
}

// --- labels -------------------------------------------------------------------

bool LabelRecord::valid() const noexcept {
  const bool finite = std::isfinite(truncated) && std::isfinite(alpha) && std::isfinite(height) &&
                      std::isfinite(width) && std::isfinite(length) && location.allFinite() &&
                      std::isfinite(rotation_y) &&
                      std::all_of(bbox2d.begin(), bbox2d.end(), [](double v) { return std::isfinite(v); });
  return finite && frame >= 0 && track_id >= 0 && height > 0.0 && width > 0.0 && length > 0.0 &&
         rotation_y >= -kPi && rotation_y < kPi;
}

std::vector<LabelRecord> parse_labels(std::string_view text) {
  std::vector<LabelRecord> out;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto tokens = split_ws(lines[ln]);
    if (tokens.empty()) continue;
    auto malformed = [&](std::string_view what) {
      return Error(ErrorCode::MalformedLine, fmt::format("line {}: {}", ln + 1, what));
    };
    // 17 fields, optionally followed by a detection score.
    if (tokens.size() != 17 && tokens.size() != 18) throw malformed("expected 17 fields");
    if (tokens[2] == "DontCare") continue;
    const auto category = parse_category(tokens[2]);
    if (!category) {
      throw Error(ErrorCode::UnknownCategory,
                  fmt::format("line {}: '{}'", ln + 1, std::string(tokens[2])));
    }
    LabelRecord rec;
    rec.category = *category;
    bool ok = parse_number(tokens[0], rec.frame) && parse_number(tokens[1], rec.track_id) &&
              parse_number(tokens[3], rec.truncated) && parse_number(tokens[4], rec.occluded) &&
              parse_number(tokens[5], rec.alpha);
    for (std::size_t i = 0; i < 4; ++i) ok = ok && parse_number(tokens[6 + i], rec.bbox2d[i]);
    ok = ok && parse_number(tokens[10], rec.height) && parse_number(tokens[11], rec.width) &&
         parse_number(tokens[12], rec.length);
    for (int i = 0; i < 3; ++i) {
      double v = 0.0;
      ok = ok && parse_number(tokens[13 + static_cast<std::size_t>(i)], v);
      rec.location[i] = v;
    }
    ok = ok && parse_number(tokens[16], rec.rotation_y);
    if (!ok) throw malformed("unparsable field");
    rec.rotation_y = normalize_angle(rec.rotation_y);
    if (!rec.valid()) throw malformed("field out of range");
    out.push_back(rec);
  }
  return out;
}

std::vector<LabelRecord> read_labels(const fs::path& path) { return parse_labels(read_text(path)); }

std::string format_labels(std::span<const LabelRecord> records) {
  // Largest 4-decimal magnitude strictly inside [-pi, pi); keeps the written
  // angle from rounding up to pi and wrapping on re-read.
  constexpr double kAngleLimit = 3.1415;
  std::string out;
  for (const LabelRecord& r : records) {
    if (!r.valid()) {
      throw Error(ErrorCode::InvalidBox,
                  fmt::format("label frame {} track {} violates invariants", r.frame, r.track_id));
    }
    const double rot = std::clamp(r.rotation_y, -kAngleLimit, kAngleLimit);
    out += fmt::format(
        "{} {} {} {:.4f} {} {:.4f} {:.4f} {:.4f} {:.4f} {:.4f} {:.4f} {:.4f} {:.4f} {:.4f} {:.4f} "
        "{:.4f} {:.4f}\n",
        r.frame, r.track_id, to_string(r.category), r.truncated, r.occluded, r.alpha, r.bbox2d[0],
        r.bbox2d[1], r.bbox2d[2], r.bbox2d[3], r.height, r.width, r.length, r.location.x(),
        r.location.y(), r.location.z(), rot);
  }
  return out;
}

void write_labels(std::span<const LabelRecord> records, const fs::path& path) {
  write_text(path, format_labels(records));
}

LabelRecord label_from_box(const Box3D& box, const Calibration& calib, int frame, bool project_bbox) {
  LabelRecord rec;
  rec.frame = frame;
  rec.track_id = box.track_id;
  rec.category = box.category;
  rec.height = box.size.height;
  rec.width = box.size.width;
  rec.length = box.size.length;
  const Eigen::Vector4d bottom(box.center.x(), box.center.y(), box.bottom(), 1.0);
  rec.location = (calib.velo_to_rect() * bottom).head<3>();
  rec.rotation_y = normalize_angle(-box.yaw - kPi / 2.0);
  if (project_bbox) {
    try {
      const VerifyProjection proj = verify_projection(calib, box);
      rec.bbox2d = {proj.hull.u_min, proj.hull.v_min, proj.hull.u_max, proj.hull.v_max};
    } catch (const Error&) {
      // Entirely behind the camera: keep the sentinel.
    }
  }
  return rec;
}

Box3D box_from_label(const LabelRecord& label, const Calibration& calib) {
  const Eigen::Matrix4d rect_to_velo = calib.velo_to_rect().inverse();
  const Eigen::Vector4d bottom = rect_to_velo * label.location.homogeneous();
  Box3D box;
  box.center = Vec3(bottom.x(), bottom.y(), bottom.z() + label.height / 2.0);
  box.size = {label.length, label.width, label.height};
  box.yaw = normalize_angle(-label.rotation_y - kPi / 2.0);
  box.category = label.category;
  box.track_id = label.track_id;
  return box;
}

// --- sequences ------------------------------------------------------------------

bool SequenceDescriptor::has_frame(int index) const noexcept {
  auto it = std::lower_bound(frames.begin(), frames.end(), index,
                             [](const FrameRef& f, int i) { return f.index < i; });
  return it != frames.end() && it->index == index;
}

const FrameRef& SequenceDescriptor::frame(int index) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), index,
                             [](const FrameRef& f, int i) { return f.index < i; });
  if (it == frames.end() || it->index != index) {
    throw Error(ErrorCode::UnknownFrame, fmt::format("sequence {} has no frame {}", id, index));
  }
  return *it;
}

std::vector<int> SequenceDescriptor::frame_indices() const {
  std::vector<int> out;
  out.reserve(frames.size());
  for (const FrameRef& f : frames) out.push_back(f.index);
  return out;
}

SequenceDescriptor load_sequence(const fs::path& directory) {
  SequenceDescriptor seq;
  seq.id = directory.filename().string();
  seq.directory = directory;
  const fs::path calib = directory / "calib.txt";
  if (!fs::is_regular_file(calib)) throw Error(ErrorCode::MissingFile, "no calib.txt");
  seq.calibration = load_calibration(calib);

  const fs::path velodyne = directory / "velodyne";
  if (!fs::is_directory(velodyne)) throw Error(ErrorCode::MissingFile, "no velodyne directory");
  for (const auto& entry : fs::directory_iterator(velodyne)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".bin") continue;
    const std::string stem = entry.path().stem().string();
    FrameRef ref;
    if (!parse_number(std::string_view(stem), ref.index) || ref.index < 0) {
      throw Error(ErrorCode::InvalidArgument, "non-numeric frame file " + entry.path().filename().string());
    }
    ref.cloud = entry.path();
    for (const char* image_dir : {"image", "image_02"}) {
      for (const char* ext : {".png", ".jpg", ".jpeg"}) {
        const fs::path candidate = directory / image_dir / (stem + ext);
        if (ref.image.empty() && fs::is_regular_file(candidate)) ref.image = candidate;
      }
    }
    seq.frames.push_back(std::move(ref));
  }
  if (seq.frames.empty()) throw Error(ErrorCode::MissingFile, "no velodyne frames");
  std::sort(seq.frames.begin(), seq.frames.end(),
            [](const FrameRef& a, const FrameRef& b) { return a.index < b.index; });
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    if (seq.frames[i].index == seq.frames[i - 1].index) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("duplicate frame index {}", seq.frames[i].index));
    }
  }
  return seq;
}

DataRoot scan_data_root(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::Io, "data root unreadable: " + root.string());
  std::vector<fs::path> candidates;
  fs::directory_iterator it(root, ec);
  if (ec) throw Error(ErrorCode::Io, "data root unreadable: " + root.string() + " (" + ec.message() + ")");
  for (const auto& entry : it) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && !name.empty() && name.front() != '.') candidates.push_back(entry.path());
  }
  std::sort(candidates.begin(), candidates.end());
  DataRoot out;
  for (const fs::path& dir : candidates) {
    try {
      out.sequences.push_back(load_sequence(dir));
    } catch (const Error& e) {
      out.skipped.push_back({dir.filename().string(), e.what()});
    }
  }
  return out;
}

}  // namespace flava
