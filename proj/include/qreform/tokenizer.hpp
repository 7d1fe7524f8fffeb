#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qreform {

using Words = std::vector<std::string>;

/// Lowercased word tokens. Any ASCII character that is not a letter or digit
/// separates words; camelCase and PascalCase runs are split at case
/// boundaries ("getHTTPResponse" -> get, http, response). Bytes >= 0x80 are
/// kept as word characters so UTF-8 text survives untouched.
/// Returns an empty vector for text with no word characters.
Words split_words(std::string_view text);

/// Same as split_words but throws Error(EmptyQuery) when nothing remains.
Words tokenize(std::string_view text);

std::string join_words(std::span<const std::string> words);

}  // namespace qreform
