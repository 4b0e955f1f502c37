#pragma once

#include <fmt/format.h>

#include <string>

namespace losscost {

/// Shortest decimal that reads back to the same double.
inline std::string format_number(double value) { return fmt::format("{}", value); }

/// Fixed 17 significant digits; exact on reload.
inline std::string format_exact(double value) { return fmt::format("{:.17g}", value); }

}  // namespace losscost
