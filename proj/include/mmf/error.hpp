#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmf {

enum class ErrorKind {
  // taxonomy
  OrphanSubclass,
  UnknownSuperclass,
  UnknownSubclass,
  EmptySuperclass,
  DuplicateSubclass,
  DuplicateSuperclass,
  IdOutOfRange,
  SubclassSpaceMismatch,
  // features
  MalformedRow,
  DimensionMismatch,
  NonFiniteValue,
  UnknownLabel,
  ClassTooSmall,
  InvalidSpec,
  // structure builder
  IsolatedClass,
  EigensolverFailure,
  ZeroNormRow,
  DegeneratePoints,
  EmptyCluster,
  InvalidArgument,
  // metrics
  EmptyBatch,
  // model
  InvalidConfig,
  LabelOutOfRange,
  DivergedLoss,
  CorruptCheckpoint,
  // plumbing
  IoError,
  ParseError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::OrphanSubclass: return "OrphanSubclass";
    case ErrorKind::UnknownSuperclass: return "UnknownSuperclass";
    case ErrorKind::UnknownSubclass: return "UnknownSubclass";
    case ErrorKind::EmptySuperclass: return "EmptySuperclass";
    case ErrorKind::DuplicateSubclass: return "DuplicateSubclass";
    case ErrorKind::DuplicateSuperclass: return "DuplicateSuperclass";
    case ErrorKind::IdOutOfRange: return "IdOutOfRange";
    case ErrorKind::SubclassSpaceMismatch: return "SubclassSpaceMismatch";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::IsolatedClass: return "IsolatedClass";
    case ErrorKind::EigensolverFailure: return "EigensolverFailure";
    case ErrorKind::ZeroNormRow: return "ZeroNormRow";
    case ErrorKind::DegeneratePoints: return "DegeneratePoints";
    case ErrorKind::EmptyCluster: return "EmptyCluster";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mmf
