#include "cntf/text.hpp"

#include <cctype>

namespace cntf {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

}  // namespace

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

std::vector<TokenSpan> tokenize_with_offsets(std::string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
    } else if (is_punct(c)) {
      out.push_back({std::string(1, text[i]), i, i + 1});
      ++i;
    } else {
      std::size_t start = i;
      while (i < text.size()) {
        auto d = static_cast<unsigned char>(text[i]);
        if (is_space(d) || is_punct(d)) break;
        ++i;
      }
      out.push_back({to_lower(text.substr(start, i - start)), start, i});
    }
  }
  return out;
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  for (auto& span : tokenize_with_offsets(text)) out.push_back(std::move(span.text));
  return out;
}

bool is_punctuation_token(std::string_view token) {
  if (token.empty()) return false;
  for (char c : token) {
    if (!is_punct(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::string join(const Tokens& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += sep;
    out += tokens[i];
  }
  return out;
}

}  // namespace cntf
