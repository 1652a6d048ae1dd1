// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace tli {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

/// Fixed-point with `digits` decimals.
std::string format_fixed(double value, int digits);

/// Whole-string parses; throw ParseError naming `field` on failure.
std::size_t parse_size(std::string_view text, std::string_view field);
long long parse_int(std::string_view text, std::string_view field);
double parse_double(std::string_view text, std::string_view field);
bool parse_bool(std::string_view text, std::string_view field);

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

} // namespace tli
