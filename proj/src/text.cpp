#include "snipsearch/text.hpp"

#include <cctype>

namespace snipsearch {
namespace {

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) || c == '_';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Returns the end of a string literal starting at `pos`, or npos when the
// literal is not terminated. Single-quoted and double-quoted literals must close
// on the same line; triple-quoted literals may span lines.
std::size_t string_literal_end(std::string_view text, std::size_t pos) {
  const char quote = text[pos];
  if (text.substr(pos, 3) == std::string(3, quote)) {
    const std::size_t close = text.find(std::string(3, quote), pos + 3);
    return close == std::string_view::npos ? close : close + 3;
  }
  for (std::size_t i = pos + 1; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\') {
      ++i;
      continue;
    }
    if (c == '\n') return std::string_view::npos;
    if (c == quote) return i + 1;
  }
  return std::string_view::npos;
}

std::size_t number_literal_end(std::string_view text, std::size_t pos) {
  std::size_t i = pos;
  if (text.substr(i, 2) == "0x" || text.substr(i, 2) == "0X") {
    i += 2;
    while (i < text.size() && std::isxdigit(static_cast<unsigned char>(text[i]))) ++i;
  } else {
    while (i < text.size()) {
      const char c = text[i];
      if (is_digit(c) || c == '_') {
        ++i;
      } else if (c == '.' && i + 1 < text.size() && is_digit(text[i + 1])) {
        ++i;
      } else if ((c == 'e' || c == 'E') && i + 1 < text.size() &&
                 (is_digit(text[i + 1]) ||
                  ((text[i + 1] == '+' || text[i + 1] == '-') && i + 2 < text.size() &&
                   is_digit(text[i + 2])))) {
        i += 2;
      } else {
        break;
      }
    }
  }
  // Type suffixes (10L, 1.5f, 3j) belong to the literal.
  while (i < text.size() && is_word_char(text[i])) ++i;
  return i;
}

}  // namespace

Tokens split_words_and_punct(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
    } else if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
  return out;
}

Tokens tokenize_title(std::string_view title) {
  Tokens out;
  for (auto& tok : split_words_and_punct(title)) {
    if (!is_word_char(tok.front())) continue;
    for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(tok));
  }
  return out;
}

Tokens normalize_code(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (c == '"' || c == '\'') {
      const std::size_t end = string_literal_end(text, i);
      if (end == std::string_view::npos) {
        ++i;  // unmatched quote (usually an apostrophe in a comment)
      } else {
        out.emplace_back(kStringToken);
        i = end;
      }
      continue;
    }
    const bool at_boundary = i == 0 || !is_word_char(text[i - 1]);
    const bool starts_number =
        is_digit(c) || (c == '.' && i + 1 < text.size() && is_digit(text[i + 1]));
    if (at_boundary && starts_number) {
      out.emplace_back(kNumberToken);
      i = number_literal_end(text, c == '.' ? i + 1 : i);
      continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
      continue;
    }
    out.emplace_back(1, c);
    ++i;
  }
  return out;
}

bool is_how_question(const Tokens& title_tokens) {
  if (title_tokens.empty()) return false;
  if (title_tokens.front() == "how") return true;
  for (std::size_t i = 0; i + 1 < title_tokens.size(); ++i) {
    if (title_tokens[i] == "how" && title_tokens[i + 1] == "to") return true;
  }
  return false;
}

}  // namespace snipsearch
