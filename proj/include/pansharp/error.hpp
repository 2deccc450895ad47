#pragma once

#include <stdexcept>
#include <string>

namespace pansharp {

enum class ErrorCode {
    BadMagic,
    UnsupportedVersion,
    UnsupportedDtype,
    TruncatedPayload,
    IoFailure,
    FactorTooSmall,
    NotDivisible,
    DimensionMismatch,
    DegenerateBand,
    PatchTooLarge,
    ZeroMeanBand,
    DegenerateHighPass,
    DegenerateBlock,
    NotFourBands,
    DegenerateVariance,
    OutOfRange,
    ShapeMismatch,
    NoTape,
    DegenerateBatch,
    NonFiniteLoss,
    WeightShapeMismatch,
    VariantMismatch,
    BadArgument,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
        case ErrorCode::TruncatedPayload: return "TruncatedPayload";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::FactorTooSmall: return "FactorTooSmall";
        case ErrorCode::NotDivisible: return "NotDivisible";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::DegenerateBand: return "DegenerateBand";
        case ErrorCode::PatchTooLarge: return "PatchTooLarge";
        case ErrorCode::ZeroMeanBand: return "ZeroMeanBand";
        case ErrorCode::DegenerateHighPass: return "DegenerateHighPass";
        case ErrorCode::DegenerateBlock: return "DegenerateBlock";
        case ErrorCode::NotFourBands: return "NotFourBands";
        case ErrorCode::DegenerateVariance: return "DegenerateVariance";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NoTape: return "NoTape";
        case ErrorCode::DegenerateBatch: return "DegenerateBatch";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::WeightShapeMismatch: return "WeightShapeMismatch";
        case ErrorCode::VariantMismatch: return "VariantMismatch";
        case ErrorCode::BadArgument: return "BadArgument";
    }
    return "UnknownError";
}

}  // namespace pansharp
