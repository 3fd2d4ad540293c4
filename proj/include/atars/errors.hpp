#pragma once

#include <stdexcept>
#include <string>

namespace atars {

// Exit-code families used by the CLI: data errors map to 1, backend
// errors to 2, config errors to 3.
enum class ErrorKind { Data, Backend, Config };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define ATARS_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(Kind, #Name ": " + what) {} \
  }

// corpus
ATARS_DEFINE_ERROR(ParseError, ErrorKind::Data);
ATARS_DEFINE_ERROR(IntegrityError, ErrorKind::Data);
ATARS_DEFINE_ERROR(UnknownItem, ErrorKind::Data);
ATARS_DEFINE_ERROR(MalformedHit, ErrorKind::Data);

// gateway
ATARS_DEFINE_ERROR(BackendUnavailable, ErrorKind::Backend);
ATARS_DEFINE_ERROR(RateLimited, ErrorKind::Backend);
ATARS_DEFINE_ERROR(MalformedResponse, ErrorKind::Backend);
ATARS_DEFINE_ERROR(EmptyText, ErrorKind::Data);
ATARS_DEFINE_ERROR(SlotMismatch, ErrorKind::Config);
ATARS_DEFINE_ERROR(EmptyOutput, ErrorKind::Data);
ATARS_DEFINE_ERROR(UnparseableResponse, ErrorKind::Data);
ATARS_DEFINE_ERROR(InconsistentResponse, ErrorKind::Data);
ATARS_DEFINE_ERROR(UnknownLabel, ErrorKind::Data);

// extraction / personalization
ATARS_DEFINE_ERROR(InsufficientBank, ErrorKind::Data);
ATARS_DEFINE_ERROR(DomainError, ErrorKind::Data);
ATARS_DEFINE_ERROR(MismatchedAspect, ErrorKind::Data);

// scoring / evaluation
ATARS_DEFINE_ERROR(CoverageError, ErrorKind::Data);
ATARS_DEFINE_ERROR(SetMismatch, ErrorKind::Data);
ATARS_DEFINE_ERROR(EmptyInput, ErrorKind::Data);
ATARS_DEFINE_ERROR(InsufficientItems, ErrorKind::Data);

// cli
ATARS_DEFINE_ERROR(ConfigError, ErrorKind::Config);

#undef ATARS_DEFINE_ERROR

}  // namespace atars
