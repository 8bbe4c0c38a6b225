#pragma once

#include <string>
#include <vector>

namespace metatutor {

// Shortest text form that round-trips an IEEE double exactly.
std::string format_full(double v);

// Half-away-from-zero rounding, e.g. round_to(76.49, 1) == 76.5.
double round_to(double v, int decimals);

// Fixed-decimal rendering with half-away-from-zero rounding.
std::string format_fixed(double v, int decimals);

std::string trim(const std::string& s);
std::vector<std::string> split_ws(const std::string& line);
std::vector<std::string> split(const std::string& line, char sep);

// Strict parses; `context` names the offending location in the error message.
double parse_double(const std::string& tok, const std::string& context);
long long parse_int(const std::string& tok, const std::string& context);

}  // namespace metatutor
