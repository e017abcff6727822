#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kinetrace {

// Base of every error raised by the toolkit. Subclasses are thin tags so
// callers (and the CLI exit-code mapping) can dispatch on the failure kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KINETRACE_DEFINE_ERROR(Name) \
  class Name : public Error {        \
   public:                           \
    using Error::Error;              \
  }

KINETRACE_DEFINE_ERROR(DesignError);
KINETRACE_DEFINE_ERROR(LengthError);
KINETRACE_DEFINE_ERROR(ShapeError);
KINETRACE_DEFINE_ERROR(ArgumentError);
KINETRACE_DEFINE_ERROR(DegenerateChannelError);
KINETRACE_DEFINE_ERROR(DegenerateSeriesError);
KINETRACE_DEFINE_ERROR(DegenerateBatchError);
KINETRACE_DEFINE_ERROR(IoError);
KINETRACE_DEFINE_ERROR(FormatError);
KINETRACE_DEFINE_ERROR(ValidationError);
KINETRACE_DEFINE_ERROR(ChannelError);
KINETRACE_DEFINE_ERROR(HistoryError);
KINETRACE_DEFINE_ERROR(EmptyReportError);

#undef KINETRACE_DEFINE_ERROR

// Raised by the training loop when the loss stops being finite.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace kinetrace
