#include "attrscan/error.hpp"

namespace attrscan {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Io: return "Io";
        case ErrorCode::ZeroDimension: return "ZeroDimension";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::BadHeader: return "BadHeader";
        case ErrorCode::MissingManifest: return "MissingManifest";
        case ErrorCode::BadManifest: return "BadManifest";
        case ErrorCode::DanglingPath: return "DanglingPath";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::EmptySlice: return "EmptySlice";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::IsolatedNode: return "IsolatedNode";
        case ErrorCode::NotStochastic: return "NotStochastic";
        case ErrorCode::NoAnnotations: return "NoAnnotations";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IdMismatch: return "IdMismatch";
        case ErrorCode::MissingImages: return "MissingImages";
    }
    return "Unknown";
}

}  // namespace attrscan
