#pragma once

#include <stdexcept>
#include <string>

namespace promptcal {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : Error {
    using Error::Error;
};

/// Malformed dataset record. `line` is 1-based, `field` names the offending key.
struct SchemaError : Error {
    SchemaError(std::size_t line_, std::string field_, const std::string& detail)
        : Error("schema error at line " + std::to_string(line_) + ", field '" + field_ +
                "': " + detail),
          line(line_),
          field(std::move(field_)) {}
    std::size_t line;
    std::string field;
};

struct DuplicateIdError : Error {
    using Error::Error;
};

struct SizeError : Error {
    using Error::Error;
};

struct EmptyError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

/// Non-finite loss during optimization; aborts the step with a diagnostic.
struct DivergenceError : Error {
    using Error::Error;
};

/// Checkpoint refused because the prompt library or feature config does not match.
struct ChecksumError : Error {
    using Error::Error;
};

// Backend-side failures. Transport-class errors are retryable; rejections are not.
struct TransportError : Error {
    using Error::Error;
};

struct TimeoutError : TransportError {
    using TransportError::TransportError;
};

struct HttpStatusError : Error {
    HttpStatusError(int code_, const std::string& body)
        : Error("http status " + std::to_string(code_) + (body.empty() ? "" : ": " + body)),
          code(code_) {}
    int code;
};

/// Server-side refusal carrying a message (e.g. unsupported image input).
struct BackendRejection : Error {
    using Error::Error;
};

}  // namespace promptcal
