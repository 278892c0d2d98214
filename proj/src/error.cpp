#include "treecat/error.hpp"

namespace treecat {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidZoom: return "InvalidZoom";
    case Errc::LatOutOfMercatorBand: return "LatOutOfMercatorBand";
    case Errc::PixelOutOfFrame: return "PixelOutOfFrame";
    case Errc::EnuOutOfRange: return "EnuOutOfRange";
    case Errc::ZeroRange: return "ZeroRange";
    case Errc::NoGroundIntersection: return "NoGroundIntersection";
    case Errc::ParseError: return "ParseError";
    case Errc::InvalidCoordinate: return "InvalidCoordinate";
    case Errc::DuplicateView: return "DuplicateView";
    case Errc::EmptyIndex: return "EmptyIndex";
    case Errc::IoError: return "IoError";
    case Errc::OutsideExtent: return "OutsideExtent";
    case Errc::UnknownView: return "UnknownView";
    case Errc::EmptyGroundTruth: return "EmptyGroundTruth";
    case Errc::EmptyPredictions: return "EmptyPredictions";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::MissingView: return "MissingView";
    case Errc::SingleClass: return "SingleClass";
    case Errc::EmptyData: return "EmptyData";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::UnlabeledPair: return "UnlabeledPair";
    case Errc::DegenerateRoad: return "DegenerateRoad";
    case Errc::TooManyCandidates: return "TooManyCandidates";
    case Errc::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

}  // namespace treecat
