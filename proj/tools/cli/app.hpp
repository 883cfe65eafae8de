#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace swinvrnn::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
// 3 unmet precondition (missing cache, checkpoint or artifacts).
// Errors print `error[<kind>]: <message>` to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace swinvrnn::cli
