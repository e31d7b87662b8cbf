#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ressl::csv {

// Splits one comma-separated line; fields are whitespace-trimmed and no
// quoting is recognised.
std::vector<std::string> split(std::string_view line);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// Reads lines, stripping a trailing '\r'. Returns false at EOF.
bool read_line(std::istream& in, std::string& line);

// Shortest decimal text that round-trips to the same double.
std::string format_shortest(double v);
// Rounded half away from zero to `digits` decimals, fixed notation. Negative
// zero prints as zero.
std::string format_fixed(double v, int digits = 3);
double round_half_away(double v, int digits = 3);

}  // namespace ressl::csv
