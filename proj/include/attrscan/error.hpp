#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attrscan {

enum class ErrorCode {
    Io,
    ZeroDimension,
    BadMagic,
    BadHeader,
    MissingManifest,
    BadManifest,
    DanglingPath,
    ShapeMismatch,
    InvalidArgument,
    EmptySlice,
    TooFewPoints,
    IsolatedNode,
    NotStochastic,
    NoAnnotations,
    ParseError,
    IdMismatch,
    MissingImages,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the engine; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace attrscan
