#pragma once

#include <stdexcept>
#include <string>

namespace intentkit {

// Coarse classes used by the CLI to pick an exit code.
enum class ErrorCategory { io, config, data, backend, validation };

class Error : public std::runtime_error {
  public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

  private:
    ErrorCategory category_;
};

class IoError : public Error {
  public:
    explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

// Raised when a file or LLM response does not follow the expected structure.
class ParseError : public Error {
  public:
    enum class Kind { missing_key, bad_enum, malformed };

    ParseError(Kind kind, const std::string& what)
        : Error(ErrorCategory::validation, what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

  private:
    Kind kind_;
};

const char* to_string(ParseError::Kind kind);

class InvariantViolation : public Error {
  public:
    InvariantViolation(std::string invariant, const std::string& what)
        : Error(ErrorCategory::validation, what), invariant_(std::move(invariant)) {}

    const std::string& invariant() const noexcept { return invariant_; }

  private:
    std::string invariant_;
};

// Generic data-shape problem (empty dataset, too few samples, ...).
class DataError : public Error {
  public:
    DataError(std::string code, const std::string& what)
        : Error(ErrorCategory::data, what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

  private:
    std::string code_;
};

class BackendError : public Error {
  public:
    explicit BackendError(const std::string& what) : Error(ErrorCategory::backend, what) {}
};

class TransportError : public BackendError {
  public:
    TransportError(const std::string& what, bool retryable)
        : BackendError(what), retryable_(retryable) {}

    bool retryable() const noexcept { return retryable_; }

  private:
    bool retryable_;
};

class AuthError : public BackendError {
  public:
    explicit AuthError(const std::string& what) : BackendError(what) {}
};

class RetriesExhausted : public BackendError {
  public:
    RetriesExhausted(const std::string& what, int attempts)
        : BackendError(what), attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

  private:
    int attempts_;
};

class UnscriptedRequest : public BackendError {
  public:
    explicit UnscriptedRequest(const std::string& what) : BackendError(what) {}
};

class NetworkDenied : public BackendError {
  public:
    explicit NetworkDenied(const std::string& what) : BackendError(what) {}
};

class MissingSlot : public Error {
  public:
    explicit MissingSlot(const std::string& slot)
        : Error(ErrorCategory::config, "prompt slot not provided: " + slot), slot_(slot) {}

    const std::string& slot() const noexcept { return slot_; }

  private:
    std::string slot_;
};

class BudgetExhausted : public Error {
  public:
    BudgetExhausted(const std::string& what, int attempts)
        : Error(ErrorCategory::validation, what), attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

  private:
    int attempts_;
};

class ConflictingMerge : public Error {
  public:
    explicit ConflictingMerge(const std::string& what) : Error(ErrorCategory::validation, what) {}
};

}  // namespace intentkit
