#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gazectl {

enum class ErrorCode {
    MixedVariant,
    OutOfRange,
    EmptyInput,
    TooShort,
    TooFewSituations,
    AbsentTarget,
    ShapeMismatch,
    NotScalarLoss,
    MissingGradient,
    InvalidConfig,
    CorruptFile,
    VersionMismatch,
    ArchMismatch,
    EmptyDataset,
    NonFiniteLoss,
    NoPresentTarget,
    BadN,
    LengthMismatch,
    VariantMismatch,
    SourceEnded,
    PortBusy,
    SchemaError,
    IoError,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MixedVariant: return "MixedVariant";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::TooShort: return "TooShort";
        case ErrorCode::TooFewSituations: return "TooFewSituations";
        case ErrorCode::AbsentTarget: return "AbsentTarget";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NotScalarLoss: return "NotScalarLoss";
        case ErrorCode::MissingGradient: return "MissingGradient";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::CorruptFile: return "CorruptFile";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::ArchMismatch: return "ArchMismatch";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::NoPresentTarget: return "NoPresentTarget";
        case ErrorCode::BadN: return "BadN";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::VariantMismatch: return "VariantMismatch";
        case ErrorCode::SourceEnded: return "SourceEnded";
        case ErrorCode::PortBusy: return "PortBusy";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Single exception type for the library; `code()` says which contract was broken.
class Error : public std::runtime_error {
   public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

    ErrorCode code() const noexcept { return code_; }
    /// The message without the code prefix.
    const std::string& message() const noexcept { return message_; }

   private:
    ErrorCode code_;
    std::string message_;
};

}  // namespace gazectl
