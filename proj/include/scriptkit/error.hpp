#pragma once

#include <stdexcept>
#include <string>

namespace scriptkit {

// Exit codes used by the CLI: 0 ok, 1 usage, 2 data/schema, 3 transport.
enum class ExitCode : int { Ok = 0, Usage = 1, Data = 2, Transport = 3 };

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg, ExitCode code = ExitCode::Data)
        : std::runtime_error(msg), code_(code) {}
    ExitCode exit_code() const { return code_; }

private:
    ExitCode code_;
};

// Malformed or contract-violating input data (bad JSONL line, duplicate id,
// empty goal, ...). Carries a line number when one is known.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? "line " + std::to_string(line) + ": " + msg : msg),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

// Text that does not match an expected grammar; position is a byte offset.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg, std::size_t position = 0)
        : Error(msg + " (at position " + std::to_string(position) + ")"),
          position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

// Remote endpoint unreachable or unresponsive after all retries.
class TransportError : public Error {
public:
    explicit TransportError(const std::string& msg)
        : Error(msg, ExitCode::Transport) {}
};

// Remote endpoint answered, but not in the agreed shape. Keeps the raw body.
class ProtocolError : public Error {
public:
    ProtocolError(const std::string& msg, std::string raw_body)
        : Error(msg, ExitCode::Transport), raw_body_(std::move(raw_body)) {}
    const std::string& raw_body() const { return raw_body_; }

private:
    std::string raw_body_;
};

// A negative-sampling strategy cannot apply to this instance (no concept
// occurrences, empty history, empty donor pool). The composition layer
// absorbs these; they are not user-facing failures.
class InapplicableError : public Error {
public:
    explicit InapplicableError(const std::string& msg) : Error(msg) {}
};

}  // namespace scriptkit
