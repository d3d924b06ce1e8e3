#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flava {

enum class ErrorCode {
  // kitti_io
  MissingFile,
  MalformedLength,
  NonFiniteValue,
  MissingKey,
  WrongValueCount,
  NonOrthonormalRotation,
  MalformedLine,
  UnknownCategory,
  SchemaVersionMismatch,
  CorruptArchive,
  // geometry
  InvalidBox,
  InvalidRect,
  // annotation engine
  DegenerateFootprint,
  InsufficientPoints,
  ZeroHeight,
  DegenerateResult,
  UnknownBox,
  UnknownFrame,
  NothingToTransfer,
  HeightLocked,
  AllBehindCamera,
  // evaluation
  FrameMismatch,
  // service / cli
  UnknownSequence,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every recoverable failure in the library surfaces as this exception; the
/// code is stable and is what the HTTP layer and the CLI map to statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flava
