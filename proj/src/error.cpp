#include "adelta/error.hpp"

namespace adelta {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::PromptTooLong: return "PromptTooLong";
    case ErrorCode::TimestepOutOfRange: return "TimestepOutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SubjectNotFound: return "SubjectNotFound";
    case ErrorCode::AmbiguousSubword: return "AmbiguousSubword";
    case ErrorCode::EncoderMismatch: return "EncoderMismatch";
    case ErrorCode::NoValidPairs: return "NoValidPairs";
    case ErrorCode::SpanOutOfRange: return "SpanOutOfRange";
    case ErrorCode::DelayExceedsSteps: return "DelayExceedsSteps";
    case ErrorCode::AdapterUnavailable: return "AdapterUnavailable";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::DimMismatchOnLoad: return "DimMismatchOnLoad";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

}  // namespace adelta
