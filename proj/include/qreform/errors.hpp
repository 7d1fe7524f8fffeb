#pragma once

#include <stdexcept>
#include <string>

namespace qreform {

enum class ErrorKind {
    EmptyQuery,
    EmptySpan,
    EmptyEvaluation,
    ConfigError,
    VocabMismatch,
    MalformedInput,
    IndexError,
    DuplicateDocument,
    CorruptFixture,
    Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind)
    {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace qreform
