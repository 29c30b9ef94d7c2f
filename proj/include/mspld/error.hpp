#pragma once

#include <stdexcept>
#include <string>

namespace mspld {

/// Base for every error raised by the library. `kind()` is a stable machine
/// tag used by the CLI when it reports failures as JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

/// Malformed dataset/config/model file. Carries 1-based line and column when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
        : Error("parse_error", what), line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& what) : Error("training_error", what) {}
};

}  // namespace mspld
