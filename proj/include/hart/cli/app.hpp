#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hart::cli {

std::string_view version();

// Exit codes: 0 success, 1 user error (bad flag, config, input), 2 internal.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Same, `args` without the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hart::cli
