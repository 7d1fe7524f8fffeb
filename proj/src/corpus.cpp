#include "qreform/corpus.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "qreform/errors.hpp"

namespace qreform {

namespace {

bool is_blank(const std::string& line)
{
    return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

nlohmann::json parse_line(const std::string& line, std::size_t line_no)
{
    try {
        auto obj = nlohmann::json::parse(line);
        if (!obj.is_object()) {
            throw Error(ErrorKind::MalformedInput, "line " + std::to_string(line_no) + ": expected a JSON object");
        }
        return obj;
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::MalformedInput, "line " + std::to_string(line_no) + ": " + e.what());
    }
}

std::string string_field(const nlohmann::json& obj, const char* key, std::size_t line_no, bool required)
{
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        if (required) {
            throw Error(ErrorKind::MalformedInput,
                        "line " + std::to_string(line_no) + ": missing field \"" + key + "\"");
        }
        return {};
    }
    if (!it->is_string()) {
        throw Error(ErrorKind::MalformedInput,
                    "line " + std::to_string(line_no) + ": field \"" + key + "\" must be a string");
    }
    return it->get<std::string>();
}

std::ifstream open_or_throw(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open " + path.string());
    }
    return in;
}

}  // namespace

QueryCorpus read_query_corpus(std::istream& in, QueryCorpusStats* stats)
{
    QueryCorpus corpus;
    QueryCorpusStats local;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) {
            continue;
        }
        ++local.lines;
        auto obj = parse_line(line, line_no);
        Words words = split_words(string_field(obj, "query", line_no, true));
        if (words.empty()) {
            ++local.skipped;
            continue;
        }
        corpus.queries.push_back(std::move(words));
    }
    if (stats) {
        *stats = local;
    }
    return corpus;
}

QueryCorpus load_query_corpus(const std::filesystem::path& path, QueryCorpusStats* stats)
{
    auto in = open_or_throw(path);
    return read_query_corpus(in, stats);
}

SearchCorpus read_search_corpus(std::istream& in)
{
    SearchCorpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) {
            continue;
        }
        auto obj = parse_line(line, line_no);
        corpus.documents.push_back({string_field(obj, "doc_id", line_no, true),
                                    string_field(obj, "text", line_no, true),
                                    string_field(obj, "code", line_no, false)});
    }
    validate(corpus);
    return corpus;
}

SearchCorpus load_search_corpus(const std::filesystem::path& path)
{
    auto in = open_or_throw(path);
    return read_search_corpus(in);
}

void validate(const SearchCorpus& corpus)
{
    std::unordered_set<std::string_view> seen;
    for (const auto& doc : corpus.documents) {
        if (!seen.insert(doc.doc_id).second) {
            throw Error(ErrorKind::DuplicateDocument, "doc_id '" + doc.doc_id + "' appears more than once");
        }
        if (doc.text.empty()) {
            throw Error(ErrorKind::MalformedInput, "document '" + doc.doc_id + "' has empty text");
        }
    }
}

}  // namespace qreform
