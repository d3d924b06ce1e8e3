#include "flava/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <iterator>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "flava/codec.hpp"
#include "flava/error.hpp"
#include "flava/evaluation.hpp"
#include "flava/service.hpp"
#include "flava/session_archive.hpp"

namespace flava {
namespace fs = std::filesystem;

namespace {

struct ExitError {
  int code;
  std::string message;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ExitError{kExitInput, "cannot open " + path.string()};
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw ExitError{kExitEnvironment, "cannot write " + path.string()};
  }
}

// Errors from parsing an input file, tagged with its path.
template <typename F>
auto with_file(const fs::path& path, F f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw ExitError{kExitEnvironment, path.string() + ": " + e.what()};
    throw ExitError{kExitInput, path.string() + ": " + e.what()};
  }
}

bool looks_like_archive(const std::string& text) {
  const auto pos = text.find_first_not_of(" \t\r\n");
  return pos != std::string::npos && text[pos] == '{';
}

std::string timestamp_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void emit(std::ostream& out, const std::string& text, const std::string& out_path) {
  out << text;
  if (!out_path.empty()) write_text(out_path, text);
}

EngineConfig engine_config(double clip_low, double clip_high, const std::string& anchors) {
  EngineConfig cfg;
  cfg.clip = {clip_low, clip_high};
  if (!cfg.clip.valid()) {
    throw ExitError{kExitInput, fmt::format("invalid clip percentiles ({}, {})", clip_low, clip_high)};
  }
  if (!anchors.empty()) cfg.anchors = with_file(anchors, [&] { return load_anchor_table(anchors); });
  return cfg;
}

// ---------------------------------------------------------------------------

struct ServeOptions {
  std::string data_root;
  std::string host = "127.0.0.1";
  int port = 8080;
  int autosave_secs = 30;
  double clip_low = 0.0;
  double clip_high = 100.0;
  std::string anchors;
};

int cmd_serve(const ServeOptions& o, std::ostream& out, const std::atomic<bool>* stop) {
  ServiceConfig cfg;
  cfg.data_root = o.data_root;
  cfg.engine = engine_config(o.clip_low, o.clip_high, o.anchors);
  cfg.autosave_interval = std::chrono::seconds(o.autosave_secs);
  std::unique_ptr<Service> service;
  try {
    service = std::make_unique<Service>(cfg);
  } catch (const Error& e) {
    throw ExitError{kExitEnvironment, fmt::format("data root {}: {}", o.data_root, e.what())};
  }
  int port = 0;
  try {
    port = service->bind(o.host, o.port);
  } catch (const Error& e) {
    throw ExitError{kExitEnvironment, fmt::format("port {}: {}", o.port, e.what())};
  }
  out << fmt::format("flava serving {} on http://{}:{}\n", o.data_root, o.host, port);
  for (const SequenceDescriptor& s : service->sequences()) {
    out << fmt::format("  sequence {} ({} frames)\n", s.id, s.frame_count());
  }
  for (const SkippedSequence& s : service->skipped()) {
    out << fmt::format("  skipped {}: {}\n", s.id, s.reason);
  }
  out.flush();
  service->start();
  while (!(stop && stop->load())) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  service->stop(true);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string pred;
  std::string gt;
  std::string calib;
  std::string format = "text";
  std::string out;
};

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  std::optional<Calibration> calib;
  if (!o.calib.empty()) calib = with_file(o.calib, [&] { return load_calibration(o.calib); });

  const std::string pred_text = read_text(o.pred);
  FrameSet preds;
  std::optional<std::set<int>> frames;
  if (looks_like_archive(pred_text)) {
    const AnnotationSession session = with_file(o.pred, [&] { return session_from_archive(pred_text); });
    if (!calib) calib = session.sequence().calibration;
    preds = frames_from_session(session.frames());
    const auto indices = session.sequence().frame_indices();
    frames = std::set<int>(indices.begin(), indices.end());
  } else {
    if (!calib) calib = Calibration::canonical();
    const auto labels = with_file(o.pred, [&] { return parse_labels(pred_text); });
    preds = frames_from_labels(labels, *calib);
  }
  const auto gt_labels = with_file(o.gt, [&] { return read_labels(o.gt); });
  const FrameSet gts = frames_from_labels(gt_labels, *calib);

  EvalReport report;
  try {
    report = evaluate(preds, gts, frames);
  } catch (const Error& e) {
    throw ExitError{kExitInput, e.what()};
  }
  emit(out, o.format == "json" ? report_to_json(report) : report_to_table(report, timestamp_now()), o.out);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ConvertOptions {
  std::string to;
  std::string in;
  std::string out;
  std::string sequence;
  std::string calib;
};

int cmd_convert(const ConvertOptions& o) {
  if (o.to == "kitti") {
    const AnnotationSession session = with_file(o.in, [&] { return import_session(o.in); });
    const Calibration calib = o.calib.empty() ? session.sequence().calibration
                                              : with_file(o.calib, [&] { return load_calibration(o.calib); });
    std::vector<LabelRecord> labels;
    for (const auto& [frame, boxes] : session.frames()) {
      for (const AnnotatedBox& b : boxes) labels.push_back(label_from_box(b.box, calib, frame));
    }
    write_text(o.out, format_labels(labels));
    return kExitOk;
  }

  if (o.sequence.empty()) throw ExitError{kExitInput, "--to session needs --sequence DIR"};
  SequenceDescriptor seq = with_file(o.sequence, [&] { return load_sequence(o.sequence); });
  const Calibration calib =
      o.calib.empty() ? seq.calibration : with_file(o.calib, [&] { return load_calibration(o.calib); });
  const auto labels = with_file(o.in, [&] { return read_labels(o.in); });

  int next_track = 0;
  for (const LabelRecord& l : labels) next_track = std::max(next_track, l.track_id + 1);
  FrameBoxes boxes;
  for (const LabelRecord& l : labels) {
    Box3D box = box_from_label(l, calib);
    if (box.track_id < 0) box.track_id = next_track++;
    boxes[l.frame].push_back(AnnotatedBox{box, false, false});
  }
  const AnnotationSession session = with_file(o.in, [&] {
    return AnnotationSession::restore(std::move(seq), std::move(boxes), {}, next_track);
  });
  try {
    export_session(session, o.out);
  } catch (const Error& e) {
    throw ExitError{kExitEnvironment, e.what()};
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct StatsOptions {
  std::string in;
  std::string format = "text";
  std::string out;
};

std::string stats_to_json(const OperationStats& s) {
  using OJson = nlohmann::ordered_json;
  auto counts = [](const KindCounts& c) {
    OJson j = OJson::object();
    for (const OpKind k : kAllOpKinds) j[std::string(to_string(k))] = c.contains(k) ? c.at(k) : 0;
    return j;
  };
  auto means = [](const KindMeans& m) {
    OJson j = OJson::object();
    for (const OpKind k : kAllOpKinds) j[std::string(to_string(k))] = m.contains(k) ? m.at(k) : 0.0;
    return j;
  };
  OJson instances = OJson::array();
  for (const auto& [key, c] : s.per_instance) {
    instances.push_back({{"frame", key.frame},
                         {"track_id", key.track_id},
                         {"transferred", s.transferred.contains(key)},
                         {"counts", counts(c)}});
  }
  OJson doc{{"per_kind", counts(s.per_kind)},
            {"instances", s.per_instance.size()},
            {"transferred_instances", s.transferred.size()},
            {"mean_all", means(s.mean_all)},
            {"mean_transferred", means(s.mean_transferred)},
            {"mean_manual", means(s.mean_manual)},
            {"per_instance", std::move(instances)}};
  return doc.dump(2) + "\n";
}

std::string stats_to_table(const OperationStats& s, const std::string& generated) {
  std::string out = fmt::format("# generated {}\n", generated);
  const std::size_t transferred = s.transferred.size();
  out += fmt::format("instances {}  transferred {}  manual {}\n\n", s.per_instance.size(), transferred,
                     s.per_instance.size() - transferred);
  auto get = [](const KindMeans& m, OpKind k) { return m.contains(k) ? m.at(k) : 0.0; };
  out += fmt::format("{:<16} {:>8} {:>12} {:>14} {:>12}\n", "operation", "total", "per instance",
                     "w/ transfer", "w/o transfer");
  for (const OpKind k : kAllOpKinds) {
    out += fmt::format("{:<16} {:>8} {:>12.2f} {:>14.2f} {:>12.2f}\n", to_string(k), s.per_kind.at(k),
                       get(s.mean_all, k), get(s.mean_transferred, k), get(s.mean_manual, k));
  }
  if (!s.per_instance.empty()) {
    out += "\nframe track transferred";
    for (const OpKind k : kAllOpKinds) out += fmt::format(" {}", to_string(k));
    out += "\n";
    for (const auto& [key, c] : s.per_instance) {
      out += fmt::format("{} {} {}", key.frame, key.track_id, s.transferred.contains(key) ? "yes" : "no");
      for (const OpKind k : kAllOpKinds) out += fmt::format(" {}", c.contains(k) ? c.at(k) : 0);
      out += "\n";
    }
  }
  return out;
}

int cmd_stats(const StatsOptions& o, std::ostream& out) {
  const AnnotationSession session = with_file(o.in, [&] { return import_session(o.in); });
  const OperationStats stats = operation_stats(session.log());
  emit(out, o.format == "json" ? stats_to_json(stats) : stats_to_table(stats, timestamp_now()), o.out);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* stop) {
  CLI::App app{"LiDAR point-cloud annotation suite"};
  app.require_subcommand(1);
  const auto formats = CLI::IsMember({"text", "json"});

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the annotation HTTP API");
  serve_cmd->add_option("--data-root", serve.data_root, "Directory of sequences")
      ->envname("FLAVA_DATA_ROOT")
      ->required();
  serve_cmd->add_option("--host", serve.host, "Listen address")->envname("FLAVA_HOST");
  serve_cmd->add_option("--port", serve.port, "Listen port (0 picks a free one)")
      ->envname("FLAVA_PORT")
      ->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--autosave-secs", serve.autosave_secs, "Autosave interval, at most 30")
      ->envname("FLAVA_AUTOSAVE_SECS")
      ->check(CLI::Range(1, 30));
  serve_cmd->add_option("--clip-low", serve.clip_low, "Lower height percentile")->envname("FLAVA_CLIP_LOW");
  serve_cmd->add_option("--clip-high", serve.clip_high, "Upper height percentile")->envname("FLAVA_CLIP_HIGH");
  serve_cmd->add_option("--anchors", serve.anchors, "Anchor table JSON")->envname("FLAVA_ANCHORS");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score annotations against ground truth");
  eval_cmd->add_option("--pred", eval.pred, "Predicted labels or session archive")->required();
  eval_cmd->add_option("--gt", eval.gt, "Ground-truth labels")->required();
  eval_cmd->add_option("--calib", eval.calib, "calib.txt for label conversion")->envname("FLAVA_CALIB");
  eval_cmd->add_option("--format", eval.format)->envname("FLAVA_FORMAT")->check(formats);
  eval_cmd->add_option("--out", eval.out, "Also write the report here")->envname("FLAVA_OUT");

  ConvertOptions convert;
  auto* convert_cmd = app.add_subcommand("convert", "Convert between session archives and KITTI labels");
  convert_cmd->add_option("--to", convert.to)->required()->check(CLI::IsMember({"kitti", "session"}));
  convert_cmd->add_option("--in", convert.in)->required();
  convert_cmd->add_option("--out", convert.out)->required();
  convert_cmd->add_option("--sequence", convert.sequence, "Sequence directory (--to session)");
  convert_cmd->add_option("--calib", convert.calib, "Override calibration")->envname("FLAVA_CALIB");

  StatsOptions stats;
  auto* stats_cmd = app.add_subcommand("stats", "Operation counts from a session archive");
  stats_cmd->add_option("--in", stats.in)->required();
  stats_cmd->add_option("--format", stats.format)->envname("FLAVA_FORMAT")->check(formats);
  stats_cmd->add_option("--out", stats.out)->envname("FLAVA_OUT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*serve_cmd) return cmd_serve(serve, out, stop);
    if (*eval_cmd) return cmd_eval(eval, out);
    if (*convert_cmd) return cmd_convert(convert);
    if (*stats_cmd) return cmd_stats(stats, out);
  } catch (const ExitError& e) {
    err << "flava: " << e.message << '\n';
    return e.code;
  } catch (const Error& e) {
    err << "flava: " << e.what() << '\n';
    return e.code() == ErrorCode::Io ? kExitEnvironment : kExitInput;
  }
  return kExitInput;
}

}  // namespace flava
