#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace epicure::csv {

// RFC 4180 subset: comma separator, double-quoted fields with "" escapes.
// Records never span lines in epicure inputs, so a line is a record.
std::vector<std::string> split_line(std::string_view line);

std::string quote_field(std::string_view field);
std::string join_line(const std::vector<std::string>& fields);

/// Splits "a|b|c" on `sep`, trimming nothing and dropping empty pieces.
std::vector<std::string> split_list(std::string_view cell, char sep = '|');

}  // namespace epicure::csv
