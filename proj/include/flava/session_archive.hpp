#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "flava/annotation.hpp"

namespace flava {

// Session archive: a JSON document
//
//   {"format": "flava-session", "version": 1,
//    "sequence": {"id", "directory", "calibration": {"p_rect": [12],
//                 "r_rect": [16], "t_velo_cam": [16]},
//                 "frames": [{"index", "cloud", "image"}]},
//    "next_track_id": n,
//    "frames": [{"frame": i, "boxes": [<wire box>...]}],
//    "log": [{"kind", "frame", "track_id", "timestamp", "action"?}]}
//
// Matrices are row-major. Doubles are written with round-trip precision so
// import(export(s)) == s exactly.

inline constexpr std::string_view kArchiveFormat = "flava-session";
inline constexpr int kArchiveVersion = 1;

std::string session_to_archive(const AnnotationSession& session);

/// Throws SchemaVersionMismatch on an unsupported version and CorruptArchive
/// on anything else that does not decode to a valid session.
AnnotationSession session_from_archive(std::string_view text, EngineConfig config = {},
                                       AnnotationSession::Clock clock = {});

/// Atomic: writes a sibling temp file, then renames it over `path`.
void export_session(const AnnotationSession& session, const std::filesystem::path& path);
AnnotationSession import_session(const std::filesystem::path& path, EngineConfig config = {},
                                 AnnotationSession::Clock clock = {});

}  // namespace flava
