#pragma once

#include <stdexcept>
#include <string>

namespace iat {

// Base for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed textual input (CID, paths, recipes, CSV). Carries a 1-based
// line number when the input is line-oriented, 0 otherwise.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Descriptor JSON that does not match the schema; message names the offending path.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Registry/dispatch construction failures (dangling refs, unbound handlers, ...).
class BuildError : public Error {
public:
    using Error::Error;
};

// Thrown by executors/readers/writers to signal a handler failure (mapped to 5.00).
class HandlerError : public Error {
public:
    using Error::Error;
};

}  // namespace iat
