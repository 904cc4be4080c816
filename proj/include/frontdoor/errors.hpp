#pragma once

#include <stdexcept>
#include <string>

namespace frontdoor {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define FRONTDOOR_DEFINE_ERROR(Name, tag) \
  class Name : public Error {              \
   public:                                 \
    explicit Name(const std::string& what) : Error(tag, what) {} \
  };

FRONTDOOR_DEFINE_ERROR(DimensionError, "dimension")
FRONTDOOR_DEFINE_ERROR(ValidationError, "validation")
FRONTDOOR_DEFINE_ERROR(ConditioningError, "conditioning")
FRONTDOOR_DEFINE_ERROR(CapacityError, "capacity")
FRONTDOOR_DEFINE_ERROR(IdentificationError, "identification")
FRONTDOOR_DEFINE_ERROR(StateError, "state")
FRONTDOOR_DEFINE_ERROR(DivergenceError, "divergence")
FRONTDOOR_DEFINE_ERROR(IoError, "io")

#undef FRONTDOOR_DEFINE_ERROR

}  // namespace frontdoor
