#include "flava/service.hpp"

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <iterator>
#include <list>
#include <map>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>
#include <httplib.h>

#include "flava/codec.hpp"
#include "flava/error.hpp"
#include "flava/evaluation.hpp"
#include "flava/session_archive.hpp"

namespace flava {
namespace fs = std::filesystem;

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSequence:
    case ErrorCode::UnknownFrame:
    case ErrorCode::UnknownBox:
    case ErrorCode::MissingFile:
      return 404;
    case ErrorCode::HeightLocked:
      return 409;
    case ErrorCode::Io:
      return 500;
    default:
      return 422;
  }
}

std::string new_token() {
  std::random_device rd;
  std::mt19937_64 gen((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
  return fmt::format("{:016x}{:016x}", gen(), gen());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string image_content_type(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  return "application/octet-stream";
}

void send_json(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::exception& e) {
    throw HttpError{400, "MalformedJson", e.what()};
  }
}

int parse_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw HttpError{404, "UnknownFrame", "not an index: " + s};
}

}  // namespace

struct SequenceState {
  SequenceDescriptor descriptor;
  std::string token;
  mutable std::shared_mutex mutex;
  std::unique_ptr<AnnotationSession> session;
  bool dirty = false;
  int current_frame = -1;

  fs::path archive_path() const { return descriptor.directory / kArchiveFileName; }
};

class CloudCache {
 public:
  explicit CloudCache(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  std::shared_ptr<const PointCloud> get(const SequenceDescriptor& seq, int frame) {
    const Key key{seq.id, frame};
    {
      std::lock_guard lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) {
        order_.splice(order_.begin(), order_, it->second.second);
        return it->second.first;
      }
    }
    auto cloud = std::make_shared<const PointCloud>(load_point_cloud(seq.frame(frame).cloud));
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second.first;
    order_.push_front(key);
    entries_.emplace(key, std::make_pair(cloud, order_.begin()));
    while (entries_.size() > capacity_) {
      entries_.erase(order_.back());
      order_.pop_back();
    }
    return cloud;
  }

 private:
  using Key = std::pair<std::string, int>;
  std::size_t capacity_;
  std::mutex mutex_;
  std::list<Key> order_;
  std::map<Key, std::pair<std::shared_ptr<const PointCloud>, std::list<Key>::iterator>> entries_;
};

struct Service::Impl {
  ServiceConfig config;
  DataRoot root;
  std::map<std::string, std::unique_ptr<SequenceState>> states;
  CloudCache clouds;
  httplib::Server server;
  int port = -1;

  std::thread server_thread;
  std::thread autosave_thread;
  std::mutex stop_mutex;
  std::condition_variable stop_cv;
  bool stopping = false;
  bool stopped = false;

  mutable std::mutex warnings_mutex;
  std::vector<std::string> warning_list;

  explicit Impl(ServiceConfig cfg)
      : config(std::move(cfg)), root(scan_data_root(config.data_root)), clouds(config.cloud_cache_frames) {
    config.autosave_interval = std::min(config.autosave_interval, kMaxAutosaveInterval);
    for (const SequenceDescriptor& seq : root.sequences) {
      auto state = std::make_unique<SequenceState>();
      state->descriptor = seq;
      state->token = new_token();
      state->session = restore_or_create(seq);
      states.emplace(seq.id, std::move(state));
    }
    // Without SO_REUSEPORT so an occupied port fails to bind.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    routes();
    autosave_thread = std::thread([this] { autosave_loop(); });
  }

  void warn(std::string message) {
    std::cerr << "flava: warning: " << message << '\n';
    std::lock_guard lock(warnings_mutex);
    warning_list.push_back(std::move(message));
  }

  std::unique_ptr<AnnotationSession> restore_or_create(const SequenceDescriptor& seq) {
    const fs::path path = seq.directory / kArchiveFileName;
    if (fs::exists(path)) {
      try {
        AnnotationSession saved = import_session(path, config.engine, config.clock);
        FrameBoxes boxes = saved.frames();
        std::vector<OperationEvent> log(saved.log().begin(), saved.log().end());
        return std::make_unique<AnnotationSession>(AnnotationSession::restore(
            seq, std::move(boxes), std::move(log), saved.next_track_id(), config.engine, config.clock));
      } catch (const Error& e) {
        fs::path aside = path;
        aside += ".bad";
        std::error_code ec;
        fs::rename(path, aside, ec);
        warn(fmt::format("sequence {}: archive not restored ({}); moved to {}", seq.id, e.what(),
                         aside.string()));
      }
    }
    return std::make_unique<AnnotationSession>(seq, config.engine, config.clock);
  }

  SequenceState& state(const std::string& id) {
    const auto it = states.find(id);
    if (it == states.end()) throw Error(ErrorCode::UnknownSequence, "no sequence '" + id + "'");
    return *it->second;
  }

  static void require_token(const SequenceState& s, const httplib::Request& req) {
    if (req.get_header_value(std::string(kTokenHeader)) != s.token) {
      throw HttpError{401, "Unauthorized", "missing or wrong session token"};
    }
  }

  // Caller holds the exclusive lock.
  bool save_locked(SequenceState& s) {
    if (!s.dirty) return false;
    try {
      export_session(*s.session, s.archive_path());
      s.dirty = false;
      return true;
    } catch (const Error& e) {
      warn(fmt::format("sequence {}: autosave failed ({}); annotations kept in memory", s.descriptor.id,
                       e.what()));
      return false;
    }
  }

  std::vector<std::string> save_all() {
    std::vector<std::string> saved;
    for (auto& [id, s] : states) {
      std::unique_lock lock(s->mutex);
      if (save_locked(*s)) saved.push_back(id);
    }
    return saved;
  }

  void autosave_loop() {
    std::unique_lock lock(stop_mutex);
    while (!stopping) {
      stop_cv.wait_for(lock, config.autosave_interval, [this] { return stopping; });
      if (stopping) break;
      lock.unlock();
      save_all();
      lock.lock();
    }
  }

  void stop(bool save) {
    {
      std::lock_guard lock(stop_mutex);
      if (stopped) return;
      stopping = true;
      stopped = true;
    }
    stop_cv.notify_all();
    server.stop();
    if (server_thread.joinable()) server_thread.join();
    if (autosave_thread.joinable()) autosave_thread.join();
    if (save) save_all();
  }

  // Applies a mutation under the sequence's exclusive lock. The response
  // carries the new log length so clients can observe the serial order.
  Json mutate(SequenceState& s, const Action& action) {
    std::unique_lock lock(s.mutex);
    const CloudProvider provider = [this, &s](int frame) { return clouds.get(s.descriptor, frame); };
    const MutationResult result = s.session->apply(action, provider);
    s.dirty = true;
    Json out{{"log_length", s.session->log().size()}};
    if (result.box) out["box"] = *result.box;
    if (result.transfer) out["transfer"] = *result.transfer;
    return out;
  }

  Json summary(const SequenceState& s) const {
    std::shared_lock lock(s.mutex);
    return Json{{"id", s.descriptor.id},
                {"frames", s.descriptor.frame_count()},
                {"frame_indices", s.descriptor.frame_indices()},
                {"annotations", s.session->box_count()}};
  }

  template <typename F>
  httplib::Server::Handler wrap(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        send_json(res, Json{{"error", e.code}, {"message", e.message}}, e.status);
      } catch (const Error& e) {
        send_json(res, Json{{"error", to_string(e.code())}, {"message", e.what()}}, status_for(e.code()));
      } catch (const Json::exception& e) {
        send_json(res, Json{{"error", "InvalidArgument"}, {"message", e.what()}}, 422);
      } catch (const std::exception& e) {
        send_json(res, Json{{"error", "Internal"}, {"message", e.what()}}, 500);
      }
    };
  }

  void routes();
};

void Service::Impl::routes() {
  const std::string seq = R"(/sequences/([^/]+))";
  const std::string frame = seq + R"(/frames/(-?\d+))";
  const std::string box = frame + R"(/boxes/(-?\d+))";

  server.Post("/sessions", wrap([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = parse_body(req);
                SequenceState& s = state(body.at("sequence").get<std::string>());
                send_json(res, Json{{"sequence", s.descriptor.id}, {"token", s.token}}, 201);
              }));

  server.Get("/sequences", wrap([this](const httplib::Request&, httplib::Response& res) {
               Json out = Json::array();
               for (const auto& [id, s] : states) out.push_back(summary(*s));
               send_json(res, out);
             }));

  server.Get(frame, wrap([this](const httplib::Request& req, httplib::Response& res) {
               SequenceState& s = state(req.matches[1]);
               const int n = parse_int(req.matches[2]);
               const FrameRef& ref = s.descriptor.frame(n);
               const std::string base = fmt::format("/sequences/{}/frames/{}", s.descriptor.id, n);
               Json boxes = Json::array();
               bool switched = false;
               {
                 std::shared_lock lock(s.mutex);
                 for (const AnnotatedBox& b : s.session->boxes(n)) boxes.push_back(b);
                 switched = s.current_frame != n;
               }
               if (switched) {
                 std::unique_lock lock(s.mutex);
                 s.current_frame = n;
                 save_locked(s);
               }
               send_json(res, Json{{"sequence", s.descriptor.id},
                                   {"frame", n},
                                   {"calibration", s.descriptor.calibration},
                                   {"cloud", base + "/cloud"},
                                   {"image", ref.image.empty() ? Json(nullptr) : Json(base + "/image")},
                                   {"boxes", std::move(boxes)}});
             }));

  server.Get(frame + "/cloud", wrap([this](const httplib::Request& req, httplib::Response& res) {
               SequenceState& s = state(req.matches[1]);
               const FrameRef& ref = s.descriptor.frame(parse_int(req.matches[2]));
               res.set_content(read_file(ref.cloud), "application/octet-stream");
             }));

  server.Get(frame + "/image", wrap([this](const httplib::Request& req, httplib::Response& res) {
               SequenceState& s = state(req.matches[1]);
               const FrameRef& ref = s.descriptor.frame(parse_int(req.matches[2]));
               if (ref.image.empty()) throw Error(ErrorCode::MissingFile, "frame has no image");
               res.set_content(read_file(ref.image), image_content_type(ref.image));
             }));

  server.Post(frame + "/frustum", wrap([this](const httplib::Request& req, httplib::Response& res) {
                SequenceState& s = state(req.matches[1]);
                const int n = parse_int(req.matches[2]);
                s.descriptor.frame(n);
                const Json body = parse_body(req);
                const Rect2D rect{body.at("u_min").get<double>(), body.at("v_min").get<double>(),
                                  body.at("u_max").get<double>(), body.at("v_max").get<double>()};
                const auto cloud = clouds.get(s.descriptor, n);
                const FrustumSelection sel = frustum_select(s.descriptor.calibration, *cloud, rect);
                Json out{{"indices", sel.indices}, {"depth_range", nullptr}};
                if (sel.depth_range) out["depth_range"] = {sel.depth_range->first, sel.depth_range->second};
                send_json(res, out);
              }));

  server.Post(frame + "/boxes", wrap([this](const httplib::Request& req, httplib::Response& res) {
                SequenceState& s = state(req.matches[1]);
                require_token(s, req);
                const Json body = parse_body(req);
                const Action action = CreateBox{parse_int(req.matches[2]), body.at("footprint").get<BevFootprint>(),
                                                body.at("category").get<Category>()};
                send_json(res, mutate(s, action), 201);
              }));

  server.Patch(box, wrap([this](const httplib::Request& req, httplib::Response& res) {
                 SequenceState& s = state(req.matches[1]);
                 require_token(s, req);
                 Json body = parse_body(req);
                 const std::string type = body.value("type", std::string());
                 if (type != "adjust" && type != "view_edit" && type != "lock") {
                   throw Error(ErrorCode::InvalidArgument, "PATCH takes an adjust, view_edit or lock action");
                 }
                 body["frame"] = parse_int(req.matches[2]);
                 body["track_id"] = parse_int(req.matches[3]);
                 send_json(res, mutate(s, body.get<Action>()));
               }));

  server.Delete(box, wrap([this](const httplib::Request& req, httplib::Response& res) {
                  SequenceState& s = state(req.matches[1]);
                  require_token(s, req);
                  send_json(res, mutate(s, DeleteBox{parse_int(req.matches[2]), parse_int(req.matches[3])}));
                }));

  server.Get(box + "/verify", wrap([this](const httplib::Request& req, httplib::Response& res) {
               SequenceState& s = state(req.matches[1]);
               const int n = parse_int(req.matches[2]);
               const int track = parse_int(req.matches[3]);
               std::optional<AnnotatedBox> found;
               {
                 std::shared_lock lock(s.mutex);
                 s.descriptor.frame(n);
                 found = s.session->find(n, track);
               }
               if (!found) throw Error(ErrorCode::UnknownBox, fmt::format("no track {} in frame {}", track, n));
               send_json(res, verify_projection(s.descriptor.calibration, found->box));
             }));

  server.Post(frame + "/transfer_object", wrap([this](const httplib::Request& req, httplib::Response& res) {
                SequenceState& s = state(req.matches[1]);
                require_token(s, req);
                const Json body = parse_body(req);
                const Action action = CopyObject{parse_int(req.matches[2]), body.at("track_id").get<int>(),
                                                 body.at("x").get<double>(), body.at("y").get<double>()};
                send_json(res, mutate(s, action), 201);
              }));

  server.Post(seq + "/transfer", wrap([this](const httplib::Request& req, httplib::Response& res) {
                SequenceState& s = state(req.matches[1]);
                require_token(s, req);
                const Json body = parse_body(req);
                Json out = mutate(s, CopyFrame{body.at("from").get<int>(), body.at("to").get<int>()});
                const bool blocked = out["transfer"]["copied"].empty() && !out["transfer"]["conflicts"].empty();
                send_json(res, out, blocked ? 409 : 200);
              }));

  server.Post(seq + "/actions", wrap([this](const httplib::Request& req, httplib::Response& res) {
                SequenceState& s = state(req.matches[1]);
                require_token(s, req);
                send_json(res, mutate(s, parse_body(req).get<Action>()));
              }));

  server.Post(seq + "/evaluate", wrap([this](const httplib::Request& req, httplib::Response& res) {
                SequenceState& s = state(req.matches[1]);
                const Json body = parse_body(req);
                std::vector<LabelRecord> labels;
                if (body.contains("gt_labels")) {
                  labels = parse_labels(body.at("gt_labels").get<std::string>());
                } else {
                  labels = read_labels(body.at("gt_path").get<std::string>());
                }
                const FrameSet gts = frames_from_labels(labels, s.descriptor.calibration);
                FrameSet preds;
                {
                  std::shared_lock lock(s.mutex);
                  preds = frames_from_session(s.session->frames());
                }
                const auto indices = s.descriptor.frame_indices();
                const EvalReport report = evaluate(preds, gts, std::set<int>(indices.begin(), indices.end()));
                res.set_content(report_to_json(report), "application/json");
              }));

  server.Get(seq + "/session", wrap([this](const httplib::Request& req, httplib::Response& res) {
               SequenceState& s = state(req.matches[1]);
               std::shared_lock lock(s.mutex);
               res.set_content(session_to_archive(*s.session), "application/json");
             }));

  server.Post("/save", wrap([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = parse_body(req);
                std::vector<std::string> saved;
                if (body.contains("sequence")) {
                  SequenceState& s = state(body.at("sequence").get<std::string>());
                  std::unique_lock lock(s.mutex);
                  if (save_locked(s)) saved.push_back(s.descriptor.id);
                } else {
                  saved = save_all();
                }
                send_json(res, Json{{"saved", saved}});
              }));
}

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() { impl_->stop(true); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::Io, fmt::format("cannot bind {}:<any>", host));
    impl_->port = bound;
  } else {
    if (!impl_->server.bind_to_port(host, port)) {
      throw Error(ErrorCode::Io, fmt::format("cannot bind {}:{} (port {} unavailable)", host, port, port));
    }
    impl_->port = port;
  }
  return impl_->port;
}

void Service::start() {
  if (impl_->port < 0) throw Error(ErrorCode::InvalidArgument, "start() before bind()");
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Service::run() {
  if (impl_->port < 0) throw Error(ErrorCode::InvalidArgument, "run() before bind()");
  impl_->server.listen_after_bind();
}

void Service::stop(bool save) { impl_->stop(save); }

const std::vector<SequenceDescriptor>& Service::sequences() const noexcept { return impl_->root.sequences; }
const std::vector<SkippedSequence>& Service::skipped() const noexcept { return impl_->root.skipped; }

std::vector<std::string> Service::warnings() const {
  std::lock_guard lock(impl_->warnings_mutex);
  return impl_->warning_list;
}

std::optional<AnnotationSession> Service::snapshot(const std::string& sequence) const {
  const auto it = impl_->states.find(sequence);
  if (it == impl_->states.end()) return std::nullopt;
  std::shared_lock lock(it->second->mutex);
  return *it->second->session;
}

std::vector<std::string> Service::save_all() { return impl_->save_all(); }

}  // namespace flava
