#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "qreform/tokenizer.hpp"

namespace qreform {

/// Tokenized query corpus; every query holds at least one word.
struct QueryCorpus {
    std::vector<Words> queries;
};

struct Document {
    std::string doc_id;
    std::string text;
    std::string code;
};

struct SearchCorpus {
    std::vector<Document> documents;
};

struct QueryCorpusStats {
    std::size_t lines = 0;    // non-blank input lines
    std::size_t skipped = 0;  // lines whose query had no word characters
};

/// Line-delimited JSON, one {"query": ...} object per line. Blank lines are
/// ignored; queries that tokenize to nothing are skipped and counted.
QueryCorpus read_query_corpus(std::istream& in, QueryCorpusStats* stats = nullptr);
QueryCorpus load_query_corpus(const std::filesystem::path& path, QueryCorpusStats* stats = nullptr);

/// Line-delimited JSON with "doc_id", "text" and optional "code".
/// Throws DuplicateDocument on repeated ids and MalformedInput on empty text.
SearchCorpus read_search_corpus(std::istream& in);
SearchCorpus load_search_corpus(const std::filesystem::path& path);

void validate(const SearchCorpus& corpus);

}  // namespace qreform
