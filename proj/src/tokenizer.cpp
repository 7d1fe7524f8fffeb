#include "qreform/tokenizer.hpp"

#include "qreform/errors.hpp"

namespace qreform {

namespace {

bool is_word_byte(unsigned char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

bool is_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(unsigned char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

char lower(unsigned char c)
{
    return static_cast<char>(is_upper(c) ? c - 'A' + 'a' : c);
}

// Splits one run of word bytes at camelCase boundaries.
void split_identifier(std::string_view run, Words& out)
{
    std::string current;
    for (std::size_t i = 0; i < run.size(); ++i) {
        const auto c = static_cast<unsigned char>(run[i]);
        if (i > 0 && is_upper(c) && !current.empty()) {
            const auto prev = static_cast<unsigned char>(run[i - 1]);
            const bool after_lower = is_lower(prev) || is_digit(prev);
            // "HTTPResponse": the R starts a new word because a lowercase letter follows it
            const bool acronym_end = is_upper(prev) && i + 1 < run.size()
                                     && is_lower(static_cast<unsigned char>(run[i + 1]));
            if (after_lower || acronym_end) {
                out.push_back(std::move(current));
                current.clear();
            }
        }
        current.push_back(lower(c));
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
}

}  // namespace

Words split_words(std::string_view text)
{
    Words out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        const std::size_t start = i;
        while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        if (i > start) {
            split_identifier(text.substr(start, i - start), out);
        }
    }
    return out;
}

Words tokenize(std::string_view text)
{
    Words words = split_words(text);
    if (words.empty()) {
        throw Error(ErrorKind::EmptyQuery, "query has no word characters");
    }
    return words;
}

std::string join_words(std::span<const std::string> words)
{
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += w;
    }
    return out;
}

}  // namespace qreform
