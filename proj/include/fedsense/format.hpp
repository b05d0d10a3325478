#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace fedsense {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Parses a whole field as a double; throws FormatError otherwise.
double parse_double(std::string_view text);

/// Splits on commas. No quoting: none of the tables written here need it.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace fedsense
