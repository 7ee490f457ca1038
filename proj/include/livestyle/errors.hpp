#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace livestyle {

// Base for every error raised by the library. `kind()` is a stable
// machine-readable tag used by the CLI and the HTTP layer.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define LIVESTYLE_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(#Name, what) {}        \
  };

LIVESTYLE_DEFINE_ERROR(UnsupportedFormat)
LIVESTYLE_DEFINE_ERROR(CorruptImage)
LIVESTYLE_DEFINE_ERROR(InvalidSize)
LIVESTYLE_DEFINE_ERROR(RangeMismatch)
LIVESTYLE_DEFINE_ERROR(MissingTensor)
LIVESTYLE_DEFINE_ERROR(ShapeMismatch)
LIVESTYLE_DEFINE_ERROR(UnknownLayer)
LIVESTYLE_DEFINE_ERROR(DimensionMismatch)
LIVESTYLE_DEFINE_ERROR(InvalidWeights)
LIVESTYLE_DEFINE_ERROR(InvalidStrength)
LIVESTYLE_DEFINE_ERROR(EmptyDataset)
LIVESTYLE_DEFINE_ERROR(InvalidParams)
LIVESTYLE_DEFINE_ERROR(ArchiveError)

#undef LIVESTYLE_DEFINE_ERROR

// Raised when an optimized loss becomes NaN or infinite.
class DivergedLoss : public Error {
 public:
  explicit DivergedLoss(std::size_t iteration)
      : Error("DivergedLoss",
              "loss diverged at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace livestyle
