#include "qreform/errors.hpp"

namespace qreform {

const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::EmptyQuery: return "EmptyQuery";
    case ErrorKind::EmptySpan: return "EmptySpan";
    case ErrorKind::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::VocabMismatch: return "VocabMismatch";
    case ErrorKind::MalformedInput: return "MalformedInput";
    case ErrorKind::IndexError: return "IndexError";
    case ErrorKind::DuplicateDocument: return "DuplicateDocument";
    case ErrorKind::CorruptFixture: return "CorruptFixture";
    case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace qreform
