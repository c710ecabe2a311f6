#pragma once

#include <iosfwd>

namespace vihd::cli {

/// Exit codes: 0 success, 1 detection/metric failure (including compliance
/// violations), 2 malformed input or arguments.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitBadInput = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vihd::cli
