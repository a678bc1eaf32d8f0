#pragma once

#include <span>
#include <string>
#include <string_view>

namespace tsrag {

/// Shortest decimal text that parses back to exactly `v`. Negative zero is
/// written as "-0.0" so JSON readers keep the sign bit.
std::string shortest(double v);

/// Fixed-point text with `decimals` digits; "-0.0000"-style output is folded to positive zero.
std::string fixed(double v, int decimals);

/// Comma-separated `fixed` rendering of a vector.
std::string join_fixed(std::span<const double> values, int decimals, std::string_view sep = ",");

/// JSON string literal (quoted, escaped).
std::string json_quote(std::string_view s);

/// Strict full-string parse of a real number; returns false on any trailing junk.
bool parse_double(std::string_view text, double& out);

}  // namespace tsrag
