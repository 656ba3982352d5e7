#pragma once

#include <stdexcept>
#include <string>

namespace cokv {

// Base class of every error raised by the toolkit. The kind selects the CLI
// exit status.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    kConfig,       // invalid parameters or inputs
    kCapability,   // request exceeds a hard limit (e.g. enumeration size)
    kEvaluation,   // utility oracle failed
    kFormat,       // corrupt or mismatched file
    kConvergence,  // sampling cap reached without convergence
    kVerification  // self-check failed
  };

  Error(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(Kind::kConfig, what) {}
};

class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& what)
      : Error(Kind::kCapability, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(Kind::kFormat, what) {}
};

}  // namespace cokv
