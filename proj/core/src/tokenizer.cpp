#include "gkv/tokenizer.hpp"

#include <cctype>

namespace gkv {

std::vector<TokenId> tokenize(std::string_view text) {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(c);
  return out;
}

std::string detokenize(std::span<const TokenId> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t < 256) out.push_back(static_cast<char>(t));
  }
  return out;
}

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

}  // namespace gkv
