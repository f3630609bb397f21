#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace synthpii {

/// Bad caller-supplied configuration or arguments.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A record in an input file could not be parsed or failed validation.
/// `record()` is the 1-based line (or record) number, 0 when not applicable.
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string &source, std::size_t record, const std::string &what)
        : std::runtime_error(source + (record ? ":" + std::to_string(record) : std::string()) +
                             ": " + what),
          record_(record) {}

    std::size_t record() const noexcept { return record_; }

  private:
    std::size_t record_;
};

/// Network-level failure talking to a remote service.
class TransportError : public std::runtime_error {
  public:
    TransportError(const std::string &what, int status = 0)
        : std::runtime_error(what), status_(status) {}

    /// HTTP status, or 0 when no response was received.
    int status() const noexcept { return status_; }

  private:
    int status_;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input data violates an operation's precondition.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace synthpii
