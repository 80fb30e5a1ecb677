#pragma once

#include <string>
#include <vector>

namespace mkgc::cli {

// Runs one subcommand. Exit statuses: 0 success, 1 I/O error, 2 usage error,
// 3 invariant or verification failure.
int dispatch(const std::vector<std::string>& args);

} // namespace mkgc::cli
