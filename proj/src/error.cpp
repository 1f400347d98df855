#include "patchseg/error.hpp"

namespace patchseg {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorKind::TruncatedFile: return "TruncatedFile";
        case ErrorKind::NonFiniteValue: return "NonFiniteValue";
        case ErrorKind::TrailingData: return "TrailingData";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::BadHeader: return "BadHeader";
        case ErrorKind::LabelOverflow: return "LabelOverflow";
        case ErrorKind::InvalidSpec: return "InvalidSpec";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::KindMismatch: return "KindMismatch";
        case ErrorKind::ZeroVector: return "ZeroVector";
        case ErrorKind::DivergedLoss: return "DivergedLoss";
        case ErrorKind::AllZeroAffinity: return "AllZeroAffinity";
        case ErrorKind::NotSymmetric: return "NotSymmetric";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::EmptySegment: return "EmptySegment";
        case ErrorKind::TooFewPoints: return "TooFewPoints";
        case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    }
    return "Unknown";
}

namespace {

std::string decorate(ErrorKind kind, const std::string& message,
                     std::optional<std::uint64_t> offset) {
    std::string out(to_string(kind));
    out += ": ";
    out += message;
    if (offset) {
        out += " (at byte offset " + std::to_string(*offset) + ")";
    }
    return out;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& message,
             std::optional<std::uint64_t> byte_offset)
    : std::runtime_error(decorate(kind, message, byte_offset)),
      kind_(kind),
      offset_(byte_offset) {}

}  // namespace patchseg
