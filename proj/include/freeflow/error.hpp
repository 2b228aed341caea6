#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace freeflow {

enum class ErrorCode {
  InvalidArgument,
  DegenerateSpec,
  DisconnectedInterior,
  EmptyErosion,
  PointOutsideDomain,
  ZeroLengthPath,
  KernelTooSmall,
  IsolatedCell,
  PathLeavesSupport,
  LoopOutsideRegion,
  NotConservative,
  BasepointEroded,
  SpindleLeavesDomain,
  DegenerateSegment,
  TubeLeavesDomain,
  RectOutsideDomain,
  Unbalanced,
  Disconnected,
  NonSummable,
  SolutionMismatch,
  ConfigInvalid,
  MissingSeries,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateSpec: return "DegenerateSpec";
    case ErrorCode::DisconnectedInterior: return "DisconnectedInterior";
    case ErrorCode::EmptyErosion: return "EmptyErosion";
    case ErrorCode::PointOutsideDomain: return "PointOutsideDomain";
    case ErrorCode::ZeroLengthPath: return "ZeroLengthPath";
    case ErrorCode::KernelTooSmall: return "KernelTooSmall";
    case ErrorCode::IsolatedCell: return "IsolatedCell";
    case ErrorCode::PathLeavesSupport: return "PathLeavesSupport";
    case ErrorCode::LoopOutsideRegion: return "LoopOutsideRegion";
    case ErrorCode::NotConservative: return "NotConservative";
    case ErrorCode::BasepointEroded: return "BasepointEroded";
    case ErrorCode::SpindleLeavesDomain: return "SpindleLeavesDomain";
    case ErrorCode::DegenerateSegment: return "DegenerateSegment";
    case ErrorCode::TubeLeavesDomain: return "TubeLeavesDomain";
    case ErrorCode::RectOutsideDomain: return "RectOutsideDomain";
    case ErrorCode::Unbalanced: return "Unbalanced";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::NonSummable: return "NonSummable";
    case ErrorCode::SolutionMismatch: return "SolutionMismatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::MissingSeries: return "MissingSeries";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it to a stable exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace freeflow
