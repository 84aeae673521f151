#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clab::text {

// Tokenizer shared by every lexical metric: lowercase (ASCII), split on
// whitespace (ASCII and the common Unicode space code points), strip leading
// and trailing punctuation, drop tokens that end up empty.
std::vector<std::string> tokenize(std::string_view s);

// Number of Unicode code points in a UTF-8 string. Invalid lead bytes count
// as one character each.
std::size_t char_count(std::string_view s);

// Prefix holding the first `n` code points.
std::string_view prefix_chars(std::string_view s, std::size_t n);

} // namespace clab::text
