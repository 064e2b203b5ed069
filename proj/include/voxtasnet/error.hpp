#pragma once

#include <stdexcept>
#include <string>

namespace vtn {

// Base of every error thrown by the library. Subclasses name the failed
// contract so callers (and the CLI) can map them to diagnostics.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VTN_DEFINE_ERROR(Name)                   \
  class Name : public Error {                    \
   public:                                       \
    using Error::Error;                          \
  };

VTN_DEFINE_ERROR(ShapeError)
VTN_DEFINE_ERROR(ParseError)
VTN_DEFINE_ERROR(UnsupportedFormat)
VTN_DEFINE_ERROR(IoError)
VTN_DEFINE_ERROR(RateError)
VTN_DEFINE_ERROR(ConfigError)
VTN_DEFINE_ERROR(WeightError)
VTN_DEFINE_ERROR(FormatError)
VTN_DEFINE_ERROR(StateError)
VTN_DEFINE_ERROR(DegenerateReference)
VTN_DEFINE_ERROR(TooShort)
VTN_DEFINE_ERROR(NoValidFrames)
VTN_DEFINE_ERROR(EmptyInput)
VTN_DEFINE_ERROR(MissingStem)

#undef VTN_DEFINE_ERROR

}  // namespace vtn
