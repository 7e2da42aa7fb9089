#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace qlbayes::cli {

// Exit codes: 0 success, 1 domain failure (bad model/data/parameters),
// 2 usage (unknown flags, malformed config).  All diagnostics go to err.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace qlbayes::cli
