#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace seqpen::bench {

/// Prints one aligned row per run directory (its `split` row of
/// results.csv), sorted by method and then hyperparameters. Throws
/// std::runtime_error on mixed tasks or mismatched result schemas.
void compare_runs(const std::vector<std::string>& dirs, const std::string& split, std::ostream& out);

}  // namespace seqpen::bench
