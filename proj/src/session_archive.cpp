#include "flava/session_archive.hpp"

#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "flava/codec.hpp"
#include "flava/error.hpp"

namespace flava {
namespace fs = std::filesystem;

std::string session_to_archive(const AnnotationSession& session) {
  Json frames = Json::array();
  for (const auto& [frame, boxes] : session.frames()) {
    Json list = Json::array();
    for (const AnnotatedBox& b : boxes) list.push_back(b);
    frames.push_back({{"frame", frame}, {"boxes", std::move(list)}});
  }
  Json log = Json::array();
  for (const OperationEvent& e : session.log()) log.push_back(e);
  const Json doc{{"format", kArchiveFormat},
                 {"version", kArchiveVersion},
                 {"sequence", session.sequence()},
                 {"next_track_id", session.next_track_id()},
                 {"frames", std::move(frames)},
                 {"log", std::move(log)}};
  return doc.dump(1) + "\n";
}

AnnotationSession session_from_archive(std::string_view text, EngineConfig config,
                                       AnnotationSession::Clock clock) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptArchive, e.what());
  }
  if (!doc.is_object() || doc.value("format", std::string()) != kArchiveFormat) {
    throw Error(ErrorCode::CorruptArchive, "not a session archive");
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer() ||
      doc["version"].get<int>() != kArchiveVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch,
                fmt::format("archive version {}, supported {}", doc.value("version", Json()).dump(),
                            kArchiveVersion));
  }
  try {
    auto sequence = doc.at("sequence").get<SequenceDescriptor>();
    FrameBoxes boxes;
    for (const Json& f : doc.at("frames")) {
      auto& list = boxes[f.at("frame").get<int>()];
      for (const Json& b : f.at("boxes")) list.push_back(b.get<AnnotatedBox>());
    }
    std::vector<OperationEvent> log;
    for (const Json& e : doc.at("log")) log.push_back(e.get<OperationEvent>());
    return AnnotationSession::restore(std::move(sequence), std::move(boxes), std::move(log),
                                      doc.at("next_track_id").get<int>(), std::move(config),
                                      std::move(clock));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptArchive, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptArchive) throw;
    throw Error(ErrorCode::CorruptArchive, e.what());
  }
}

void export_session(const AnnotationSession& session, const fs::path& path) {
  const std::string text = session_to_archive(session);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ignored;
      fs::remove(tmp, ignored);
      throw Error(ErrorCode::Io, "short write on " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot replace " + path.string() + ": " + ec.message());
}

AnnotationSession import_session(const fs::path& path, EngineConfig config, AnnotationSession::Clock clock) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return session_from_archive(text, std::move(config), std::move(clock));
}

}  // namespace flava
