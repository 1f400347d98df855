#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace patchseg {

enum class ErrorKind {
    BadMagic,
    UnsupportedVersion,
    TruncatedFile,
    NonFiniteValue,
    TrailingData,
    IoFailure,
    BadHeader,
    LabelOverflow,
    InvalidSpec,
    InvalidArgument,
    ShapeMismatch,
    KindMismatch,
    ZeroVector,
    DivergedLoss,
    AllZeroAffinity,
    NotSymmetric,
    NoConvergence,
    EmptySegment,
    TooFewPoints,
    EmptyCorpus,
};

std::string_view to_string(ErrorKind kind);

// Every failure in the library surfaces as this exception. File-format errors
// carry the byte offset at which parsing stopped.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message,
          std::optional<std::uint64_t> byte_offset = std::nullopt);

    ErrorKind kind() const noexcept { return kind_; }
    std::optional<std::uint64_t> byte_offset() const noexcept { return offset_; }

private:
    ErrorKind kind_;
    std::optional<std::uint64_t> offset_;
};

}  // namespace patchseg
