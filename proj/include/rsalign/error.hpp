#pragma once

#include <stdexcept>
#include <string>

namespace rsalign {

enum class ErrorKind {
  kUsage,
  kConfig,
  kInvalidClass,
  kInvalidContour,
  kInvalidCount,
  kInvalidImage,
  kParse,
  kIngest,
  kPairing,
  kLabel,
  kTemplate,
  kSampling,
  kCaptionFormat,
  kDegenerateRow,
  kDegenerateLabel,
  kShape,
  kEmptyBatch,
  kTrainingFailure,
  kIo,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kInvalidClass: return "invalid-class";
    case ErrorKind::kInvalidContour: return "invalid-contour";
    case ErrorKind::kInvalidCount: return "invalid-count";
    case ErrorKind::kInvalidImage: return "invalid-image";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIngest: return "ingest";
    case ErrorKind::kPairing: return "pairing";
    case ErrorKind::kLabel: return "label";
    case ErrorKind::kTemplate: return "template";
    case ErrorKind::kSampling: return "sampling";
    case ErrorKind::kCaptionFormat: return "caption-format";
    case ErrorKind::kDegenerateRow: return "degenerate-row";
    case ErrorKind::kDegenerateLabel: return "degenerate-label";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kEmptyBatch: return "empty-batch";
    case ErrorKind::kTrainingFailure: return "training-failure";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

/// Process exit code for an error category: 2 usage, 3 ingest/parse,
/// 4 numeric failure, 5 I/O.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kConfig:
    case ErrorKind::kTemplate:
      return 2;
    case ErrorKind::kInvalidClass:
    case ErrorKind::kInvalidContour:
    case ErrorKind::kInvalidImage:
    case ErrorKind::kParse:
    case ErrorKind::kIngest:
    case ErrorKind::kPairing:
    case ErrorKind::kLabel:
    case ErrorKind::kSampling:
    case ErrorKind::kCaptionFormat:
      return 3;
    case ErrorKind::kInvalidCount:
    case ErrorKind::kDegenerateRow:
    case ErrorKind::kDegenerateLabel:
    case ErrorKind::kShape:
    case ErrorKind::kEmptyBatch:
    case ErrorKind::kTrainingFailure:
      return 4;
    case ErrorKind::kIo:
      return 5;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rsalign
