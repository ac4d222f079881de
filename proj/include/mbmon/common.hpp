#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mbmon {

// Error taxonomy, mapped to CLI exit codes:
//   ConfigError -> 2 (bad config, bad flags, missing inputs)
//   DataError   -> 3 (malformed files, schema/shape mismatches)
//   NumericError-> 4 (non-finite values, divergence)
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Derives an independent stream seed from a master seed, a purpose tag and
/// an index. Stable across runs and platforms.
std::uint64_t mix_seed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0);

/// Formats a double with 17 significant digits (lossless round trip).
std::string format_g17(double value);

}  // namespace mbmon
