#pragma once

#include <stdexcept>
#include <string>

namespace hsinr {

/// Error categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  dimension,
  configuration,
  numeric,
  format,
  domain,
  index,
  layout,
  compatibility,
  input,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define HSINR_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

HSINR_DEFINE_ERROR(DimensionError, dimension)
HSINR_DEFINE_ERROR(ConfigError, configuration)
HSINR_DEFINE_ERROR(NumericError, numeric)
HSINR_DEFINE_ERROR(DomainError, domain)
HSINR_DEFINE_ERROR(IndexError, index)
HSINR_DEFINE_ERROR(LayoutError, layout)
HSINR_DEFINE_ERROR(CompatibilityError, compatibility)
HSINR_DEFINE_ERROR(InputError, input)

#undef HSINR_DEFINE_ERROR

/// Malformed container or checkpoint; carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(ErrorKind::format, what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace hsinr
