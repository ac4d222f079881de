#pragma once

namespace mbmon {

/// Entry point shared by the binary and the tests. Exit codes: 0 success,
/// 2 config/validation error, 3 data/schema error, 4 numeric failure.
int run_cli(int argc, const char* const* argv);

}  // namespace mbmon
