#pragma once

#include <stdexcept>
#include <string>

namespace treecat {

enum class Errc {
  InvalidArgument,
  InvalidZoom,
  LatOutOfMercatorBand,
  PixelOutOfFrame,
  EnuOutOfRange,
  ZeroRange,
  NoGroundIntersection,
  ParseError,
  InvalidCoordinate,
  DuplicateView,
  EmptyIndex,
  IoError,
  OutsideExtent,
  UnknownView,
  EmptyGroundTruth,
  EmptyPredictions,
  UnknownLabel,
  MissingView,
  SingleClass,
  EmptyData,
  DimensionMismatch,
  UnlabeledPair,
  DegenerateRoad,
  TooManyCandidates,
  InvariantViolation,
};

const char* errc_name(Errc code) noexcept;

/// Library-wide exception. The code identifies the failure class; the
/// message carries provenance (file, line, key) where available.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace treecat
