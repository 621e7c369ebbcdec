#pragma once

#include <stdexcept>
#include <string>

namespace hsgd {

/// Base of every error raised by the library. `kind()` is a stable name
/// used by the CLI when reporting failures.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define HSGD_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  };

// topology
HSGD_DEFINE_ERROR(DivisibilityError)
HSGD_DEFINE_ERROR(EmptyGroupError)
HSGD_DEFINE_ERROR(PeriodOrderError)
HSGD_DEFINE_ERROR(NonSquareError)
HSGD_DEFINE_ERROR(SizeError)
HSGD_DEFINE_ERROR(ExplosionError)
HSGD_DEFINE_ERROR(InvalidArgument)
// objectives
HSGD_DEFINE_ERROR(UnknownFixture)
HSGD_DEFINE_ERROR(Unsupported)
// engine
HSGD_DEFINE_ERROR(LrTooLarge)
HSGD_DEFINE_ERROR(NonFiniteParameter)
// divergence
HSGD_DEFINE_ERROR(UnknownGroup)
HSGD_DEFINE_ERROR(BadLevel)
// bounds
HSGD_DEFINE_ERROR(NonPositive)
HSGD_DEFINE_ERROR(NotNonTrivialGrouping)
// comm
HSGD_DEFINE_ERROR(UnknownModel)
// harness
HSGD_DEFINE_ERROR(ConfigError)

#undef HSGD_DEFINE_ERROR

}  // namespace hsgd
