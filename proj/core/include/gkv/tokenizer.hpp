#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gkv {

using TokenId = std::uint32_t;

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by three specials.
inline constexpr TokenId kBosToken = 256;
inline constexpr TokenId kEotToken = 257;
inline constexpr TokenId kPadToken = 258;
inline constexpr std::uint32_t kByteVocabSize = 259;

std::vector<TokenId> tokenize(std::string_view text);

// Specials are dropped.
std::string detokenize(std::span<const TokenId> tokens);

// Whitespace-delimited word count.
std::size_t count_words(std::string_view text);

}  // namespace gkv
