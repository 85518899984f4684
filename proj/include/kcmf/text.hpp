#pragma once

#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared by the pipeline stages.
namespace kcmf::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);

/// Lowercase, trim and collapse internal whitespace runs to one space.
std::string normalize(std::string_view s);

/// Trim and collapse whitespace runs (including newlines) to one space; case kept.
std::string squash_whitespace(std::string_view s);

/// Word characters are ASCII alphanumerics and underscore.
bool is_word_char(char c);

/// Case-insensitive whole-word search of `needle` inside `haystack`.
bool contains_word(std::string_view haystack, std::string_view needle);

std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::size_t word_count(std::string_view s);
/// First `n` whitespace-separated words, joined by single spaces.
std::string first_words(std::string_view s, std::size_t n);

bool starts_with_ci(std::string_view s, std::string_view prefix);

} // namespace kcmf::text
