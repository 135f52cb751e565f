#pragma once

#include <ostream>

namespace advbench::cli {

/// Runs one subcommand (eval, perceptual, compose, attack-toy, render) and
/// returns the process exit code: 0 on success, 1 for invalid input, 2 for
/// unreadable or missing files.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace advbench::cli
