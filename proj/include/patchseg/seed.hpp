#pragma once

#include <cstdint>
#include <string_view>

namespace patchseg {

/// 64-bit FNV-1a of a byte string.
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// SplitMix64 finalizer; a bijective bit mixer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent per-stage seed from a root seed:
/// splitmix64(root ^ fnv1a64(stage)). Stages are named ("init", "affine",
/// "probe", "segments", "clusters", ...) so each can be reproduced alone.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stage) noexcept;

}  // namespace patchseg
