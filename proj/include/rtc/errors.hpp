#pragma once

#include <stdexcept>
#include <string>

namespace rtc {

/// Base class for every error raised by this library.
class RtcError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// -- transport / wire ---------------------------------------------------------

/// Network-level failure after all retries were exhausted.
class TransportError : public RtcError {
public:
    using RtcError::RtcError;
};

/// The backend answered, but not in the expected wire format.
class ProtocolError : public RtcError {
public:
    using RtcError::RtcError;
};

/// HTTP 401/403. Never retried.
class AuthError : public RtcError {
public:
    using RtcError::RtcError;
};

// -- round-trip loop ----------------------------------------------------------

/// The model produced a blank inversion or regeneration.
class EmptyGeneration : public RtcError {
public:
    using RtcError::RtcError;
};

// -- similarity ---------------------------------------------------------------

/// The judge reply contained no extractable number.
class ScoreParseError : public RtcError {
public:
    using RtcError::RtcError;
};

class DimensionMismatch : public RtcError {
public:
    using RtcError::RtcError;
};

class ZeroVector : public RtcError {
public:
    using RtcError::RtcError;
};

// -- datasets / reports -------------------------------------------------------

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public RtcError {
public:
    ParseError(const std::string& what, int line = 0)
        : RtcError(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_ = 0;
};

/// A value violates a documented invariant. Carries the offending field name.
class ValidationError : public RtcError {
public:
    explicit ValidationError(const std::string& what, std::string field = "")
        : RtcError(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class IoError : public RtcError {
public:
    using RtcError::RtcError;
};

// -- statistics ---------------------------------------------------------------

class LengthMismatch : public RtcError {
public:
    using RtcError::RtcError;
};

class ZeroVariance : public RtcError {
public:
    using RtcError::RtcError;
};

/// Fix% is undefined when there were no defects to begin with.
class DivisionByZero : public RtcError {
public:
    using RtcError::RtcError;
};

// -- oracle subprocess --------------------------------------------------------

class OracleTimeout : public RtcError {
public:
    using RtcError::RtcError;
};

/// Oracle stdout was not the expected {"defects": n} JSON.
class OracleProtocolError : public RtcError {
public:
    using RtcError::RtcError;
};

/// Oracle exited nonzero; message carries its stderr.
class OracleExecError : public RtcError {
public:
    using RtcError::RtcError;
};

// -- configuration ------------------------------------------------------------

class ConfigError : public RtcError {
public:
    using RtcError::RtcError;
};

}  // namespace rtc
