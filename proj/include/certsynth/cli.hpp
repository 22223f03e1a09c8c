#pragma once

#include <ostream>

namespace certsynth {

// Exit codes: 0 success / certified, 1 not certified, 2 bad input.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace certsynth
