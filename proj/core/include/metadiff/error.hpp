#pragma once

#include <stdexcept>
#include <string>

namespace metadiff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define METADIFF_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

METADIFF_DEFINE_ERROR(SymmetryViolation);
METADIFF_DEFINE_ERROR(ShapeMismatch);
METADIFF_DEFINE_ERROR(InvalidTimestep);
METADIFF_DEFINE_ERROR(InvalidConfig);
METADIFF_DEFINE_ERROR(NonFiniteInput);
METADIFF_DEFINE_ERROR(NonBinaryInput);
METADIFF_DEFINE_ERROR(OutOfRange);
METADIFF_DEFINE_ERROR(LengthMismatch);
METADIFF_DEFINE_ERROR(ScheduleMismatch);
METADIFF_DEFINE_ERROR(IoError);
METADIFF_DEFINE_ERROR(CorruptContainer);
METADIFF_DEFINE_ERROR(VersionMismatch);

#undef METADIFF_DEFINE_ERROR

}  // namespace metadiff
