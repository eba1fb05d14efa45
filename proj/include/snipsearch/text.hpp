#pragma once

#include <string_view>

#include "snipsearch/common.hpp"

namespace snipsearch {

inline constexpr std::string_view kNumberToken = "NUMBER";
inline constexpr std::string_view kStringToken = "STRING";

/// Splits text into word runs and single punctuation characters. Word
/// characters are ASCII alphanumerics, underscore and any non-ASCII byte, so
/// UTF-8 sequences stay inside words. Case is preserved.
Tokens split_words_and_punct(std::string_view text);

/// Lowercased word tokens of a question title; punctuation-only tokens dropped.
Tokens tokenize_title(std::string_view title);

/// Code tokens with numeric literals replaced by NUMBER and quoted string
/// literals by STRING. Punctuation is kept. Idempotent under re-joining with
/// spaces: unmatched quote characters are dropped rather than emitted.
Tokens normalize_code(std::string_view code_text);

/// True when the first token is "how" or the bigram "how to" occurs.
bool is_how_question(const Tokens& title_tokens);

}  // namespace snipsearch
