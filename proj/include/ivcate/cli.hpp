#pragma once

#include <iosfwd>

namespace ivcate {

// Exit codes: 0 success, 1 a checked threshold failed, 2 error (JSON object on err).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ivcate
