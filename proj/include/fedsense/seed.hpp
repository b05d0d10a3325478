#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace fedsense {

/// 64-bit FNV-1a hash of a byte string.
std::uint64_t fnv1a(std::string_view text);

/// Derives an independent stream seed for one component of a run.
///
/// The component name is hashed with FNV-1a and folded together with the
/// top-level seed and any indices through splitmix64 finalizers. Every random
/// stream in the library is keyed this way, so a partial rerun (one sensor,
/// one fold) draws exactly the numbers the full run drew.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component,
                          std::initializer_list<std::uint64_t> indices = {});

}  // namespace fedsense
