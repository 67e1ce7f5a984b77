#pragma once

#include <stdexcept>
#include <string>

namespace modx {

// Base for every error raised by the library. The CLI maps these to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MODX_DECLARE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

MODX_DECLARE_ERROR(DegenerateRow);
MODX_DECLARE_ERROR(DimensionMismatch);
MODX_DECLARE_ERROR(ShapeMismatch);
MODX_DECLARE_ERROR(NonpositiveTemperature);
MODX_DECLARE_ERROR(NonfiniteGradient);
MODX_DECLARE_ERROR(TooFewSamples);
MODX_DECLARE_ERROR(EmptyCorrectSet);
MODX_DECLARE_ERROR(ConstructionFailure);
MODX_DECLARE_ERROR(MissingPretrain);
MODX_DECLARE_ERROR(MissingRecords);
MODX_DECLARE_ERROR(IoError);

// Invalid user-supplied configuration; reported as a usage error (exit 2).
MODX_DECLARE_ERROR(ConfigError);

#undef MODX_DECLARE_ERROR

}  // namespace modx
