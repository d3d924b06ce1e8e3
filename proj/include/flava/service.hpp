#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flava/annotation.hpp"
#include "flava/kitti_io.hpp"

namespace flava {

inline constexpr std::string_view kArchiveFileName = "session.flava.json";
inline constexpr std::string_view kTokenHeader = "X-Session-Token";
inline constexpr std::chrono::milliseconds kMaxAutosaveInterval{30'000};

struct ServiceConfig {
  std::filesystem::path data_root;
  EngineConfig engine;
  /// Clamped to kMaxAutosaveInterval.
  std::chrono::milliseconds autosave_interval = kMaxAutosaveInterval;
  std::size_t cloud_cache_frames = 32;
  AnnotationSession::Clock clock;  // wall time when empty
};

/// HTTP front end over one AnnotationSession per sequence.
///
///   POST   /sessions                                  {"sequence"} -> {"token"}
///   GET    /sequences
///   GET    /sequences/{id}/frames/{n}
///   GET    /sequences/{id}/frames/{n}/cloud           raw velodyne bytes
///   GET    /sequences/{id}/frames/{n}/image
///   POST   /sequences/{id}/frames/{n}/frustum         {"u_min","v_min","u_max","v_max"}
///   POST   /sequences/{id}/frames/{n}/boxes           {"category","footprint"}
///   PATCH  /sequences/{id}/frames/{n}/boxes/{track}   adjust | view_edit | lock action
///   DELETE /sequences/{id}/frames/{n}/boxes/{track}
///   GET    /sequences/{id}/frames/{n}/boxes/{track}/verify
///   POST   /sequences/{id}/frames/{n}/transfer_object {"track_id","x","y"}
///   POST   /sequences/{id}/transfer                   {"from","to"}
///   POST   /sequences/{id}/actions                    any action document
///   POST   /sequences/{id}/evaluate                   {"gt_path"} or {"gt_labels"}
///   GET    /sequences/{id}/session                    archive document
///   POST   /save                                      {"sequence"?}
///
/// Mutating routes require the sequence's token in X-Session-Token (401
/// otherwise). Failures answer {"error": code, "message"} with 404 for unknown
/// resources, 409 for lock and transfer conflicts and 422 for invalid input.
class Service {
 public:
  /// Scans the data root and restores any archive found beside each
  /// sequence. Throws Io when the root is unreadable.
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds to host:port (port 0 picks a free one) and returns the bound port.
  /// Throws Io naming the port on failure.
  int bind(const std::string& host, int port);
  /// Serves on a background thread; requires bind().
  void start();
  /// Blocks serving until stop() is called from elsewhere; requires bind().
  void run();
  /// Stops serving and the autosave thread. With save=false nothing is
  /// written, which is how tests simulate a crash.
  void stop(bool save = true);

  const std::vector<SequenceDescriptor>& sequences() const noexcept;
  const std::vector<SkippedSequence>& skipped() const noexcept;
  std::vector<std::string> warnings() const;

  /// Copy of the current session state, or nullopt for an unknown id.
  std::optional<AnnotationSession> snapshot(const std::string& sequence) const;
  /// Writes every dirty session; returns the ids written.
  std::vector<std::string> save_all();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace flava
