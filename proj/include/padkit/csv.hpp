#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace padkit::csv {

/// Splits one unquoted CSV line on commas. A trailing '\r' is dropped and
/// each field is trimmed of surrounding blanks.
std::vector<std::string> split_line(std::string_view line);

/// Parses a complete decimal number; trailing junk makes it nullopt.
/// Non-finite spellings ("nan", "inf") parse and must be rejected by callers.
std::optional<double> parse_double(std::string_view text);

/// Shortest text that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace padkit::csv
