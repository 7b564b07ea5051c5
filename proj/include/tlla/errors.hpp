#pragma once

#include <stdexcept>
#include <string>

namespace tlla {

// Base for all domain errors. `kind()` is a stable machine-readable tag
// used by the CLI when emitting JSON diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TLLA_DEFINE_ERROR(NAME)                         \
  class NAME : public Error {                           \
   public:                                              \
    explicit NAME(const std::string& msg)               \
        : Error(#NAME, msg) {}                          \
  }

TLLA_DEFINE_ERROR(InvalidValue);
TLLA_DEFINE_ERROR(InvalidConfig);
TLLA_DEFINE_ERROR(DegenerateVector);
TLLA_DEFINE_ERROR(InvalidTape);
TLLA_DEFINE_ERROR(DegenerateEmbedding);
TLLA_DEFINE_ERROR(DegeneratePrompt);
TLLA_DEFINE_ERROR(TrainingDiverged);
TLLA_DEFINE_ERROR(InvalidDataset);
TLLA_DEFINE_ERROR(InfeasibleSpec);
TLLA_DEFINE_ERROR(ParseError);
TLLA_DEFINE_ERROR(FormatError);
TLLA_DEFINE_ERROR(IoError);
TLLA_DEFINE_ERROR(PreconditionFailed);

#undef TLLA_DEFINE_ERROR

}  // namespace tlla
