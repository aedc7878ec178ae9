#pragma once

#include <string>
#include <vector>

// Command-line surface: gen-corpus, train-teacher, distill, evaluate,
// analyze-misguidance, sweep. Every command is driven by the merged config
// (file, then --set overrides, then --seed/--out) and is deterministic under
// a fixed master seed.

namespace kdlab {

// Runs one command; `args` excludes the program name. Returns the process
// exit code: 0 success, 2 configuration error, 1 any other failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace kdlab
