#pragma once

#include <atomic>
#include <iosfwd>

namespace flava {

inline constexpr int kExitOk = 0;
inline constexpr int kExitEnvironment = 1;
inline constexpr int kExitInput = 2;

/// Entry point behind the `flava` binary:
///
///   flava serve   --data-root DIR [--port N] [--autosave-secs S] [--clip-low P]
///                 [--clip-high P] [--anchors FILE] [--host H]
///   flava eval    --pred FILE --gt FILE [--calib FILE] [--format text|json] [--out FILE]
///   flava convert --to kitti|session --in FILE --out FILE [--sequence DIR] [--calib FILE]
///   flava stats   --in ARCHIVE [--format text|json] [--out FILE]
///
/// Options also read FLAVA_<NAME> environment variables (FLAVA_DATA_ROOT,
/// FLAVA_PORT, ...); an explicit flag wins. `serve` runs until `stop` becomes
/// true. Returns 0 on success, 1 on environment failures (unreadable root,
/// port in use, unwritable output) and 2 on bad input.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* stop = nullptr);

}  // namespace flava
