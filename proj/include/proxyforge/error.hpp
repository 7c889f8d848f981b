#pragma once

#include <stdexcept>
#include <string>

namespace proxyforge {

/// Failure classes. The CLI maps each one to its own exit code.
enum class ErrorKind {
  kInvalidArgument = 2,
  kIo = 3,
  kFormat = 4,
  kContract = 5,
  kNetwork = 6,
  kAuth = 7,
  kMissingInput = 8,
  kStaleInput = 9,
  kNumeric = 10,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

#define PROXYFORGE_DEFINE_ERROR(Name, Kind)                  \
  class Name : public Error {                                \
   public:                                                   \
    explicit Name(const std::string& what) : Error(Kind, what) {} \
  };

PROXYFORGE_DEFINE_ERROR(InvalidArgument, ErrorKind::kInvalidArgument)
PROXYFORGE_DEFINE_ERROR(IoError, ErrorKind::kIo)
PROXYFORGE_DEFINE_ERROR(FormatError, ErrorKind::kFormat)
PROXYFORGE_DEFINE_ERROR(ContractViolation, ErrorKind::kContract)
PROXYFORGE_DEFINE_ERROR(NetworkError, ErrorKind::kNetwork)
PROXYFORGE_DEFINE_ERROR(AuthError, ErrorKind::kAuth)
PROXYFORGE_DEFINE_ERROR(MissingInput, ErrorKind::kMissingInput)
PROXYFORGE_DEFINE_ERROR(StaleInput, ErrorKind::kStaleInput)
PROXYFORGE_DEFINE_ERROR(NumericError, ErrorKind::kNumeric)

#undef PROXYFORGE_DEFINE_ERROR

/// Decoder failures carry the offending path and the specific cause.
class UnreadableFile : public IoError {
 public:
  using IoError::IoError;
};
class UnsupportedFormat : public FormatError {
 public:
  using FormatError::FormatError;
};
class CorruptHeader : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace proxyforge
