#pragma once

namespace c3dm {

// Parses and runs one CLI invocation. Exit codes: 0 success, 2 config error,
// 3 divergence, 4 I/O or file-format error.
int run_cli(int argc, const char* const* argv);

}  // namespace c3dm
