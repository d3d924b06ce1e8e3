#include "flava/error.hpp"

#include <cmath>

#include "flava/types.hpp"

namespace flava {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedLength: return "MalformedLength";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::WrongValueCount: return "WrongValueCount";
    case ErrorCode::NonOrthonormalRotation: return "NonOrthonormalRotation";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::CorruptArchive: return "CorruptArchive";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::InvalidRect: return "InvalidRect";
    case ErrorCode::DegenerateFootprint: return "DegenerateFootprint";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::ZeroHeight: return "ZeroHeight";
    case ErrorCode::DegenerateResult: return "DegenerateResult";
    case ErrorCode::UnknownBox: return "UnknownBox";
    case ErrorCode::UnknownFrame: return "UnknownFrame";
    case ErrorCode::NothingToTransfer: return "NothingToTransfer";
    case ErrorCode::HeightLocked: return "HeightLocked";
    case ErrorCode::AllBehindCamera: return "AllBehindCamera";
    case ErrorCode::FrameMismatch: return "FrameMismatch";
    case ErrorCode::UnknownSequence: return "UnknownSequence";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::Car: return "Car";
    case Category::Van: return "Van";
    case Category::Truck: return "Truck";
    case Category::Pedestrian: return "Pedestrian";
    case Category::Cyclist: return "Cyclist";
    case Category::Tram: return "Tram";
    case Category::Misc: return "Misc";
    case Category::PersonSitting: return "Person_sitting";
  }
  return "Misc";
}

std::optional<Category> parse_category(std::string_view name) noexcept {
  for (Category c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

double normalize_angle(double radians) noexcept {
  constexpr double kTwoPi = 2.0 * kPi;
  double a = radians - kTwoPi * std::floor((radians + kPi) / kTwoPi);
  // floor() can land exactly on the excluded upper end through rounding.
  if (a >= kPi) a -= kTwoPi;
  if (a < -kPi) a = -kPi;
  return a;
}

}  // namespace flava
