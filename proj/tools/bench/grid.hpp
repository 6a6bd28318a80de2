#pragma once

#include <string>

namespace seqpen::bench {

/// Runs every config matching `pattern` in its own child process, at most
/// `jobs` at a time. Configs that would share an output directory are
/// rejected before anything runs. Returns the largest child exit code.
int run_grid(const std::string& pattern, int jobs);

}  // namespace seqpen::bench
