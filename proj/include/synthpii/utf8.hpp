#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace synthpii::utf8 {

/// Decodes UTF-8 into Unicode scalar values. Throws DataError on malformed input.
std::u32string decode(std::string_view text);

std::string encode(std::u32string_view cps);
void append(std::string &out, char32_t cp);

bool valid(std::string_view text) noexcept;

/// Replaces malformed sequences with U+FFFD.
std::string sanitize(std::string_view text);

/// Number of Unicode scalar values in `text`.
std::size_t length(std::string_view text);

/// Substring addressed in scalar-value offsets [start, end).
std::string substr(std::string_view text, std::size_t start, std::size_t end);

bool is_space(char32_t cp) noexcept;
/// ASCII punctuation plus the common typographic marks (curly quotes, dashes, ellipsis).
bool is_punct(char32_t cp) noexcept;
/// Letters and digits. Every non-ASCII scalar that is neither space nor punctuation
/// counts as a word character.
bool is_word(char32_t cp) noexcept;

/// ASCII-only lowercasing; other scalars pass through unchanged.
char32_t to_lower(char32_t cp) noexcept;
std::string to_lower(std::string_view text);

/// Splits on Unicode whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(std::string_view text);

std::string_view trim(std::string_view text) noexcept;

} // namespace synthpii::utf8
