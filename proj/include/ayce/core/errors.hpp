#pragma once

#include <stdexcept>
#include <string>

namespace ayce {

/// Broad failure classes. The CLI maps them onto process exit codes
/// (usage 1, data/io 2, numeric 3).
enum class ErrorKind { Usage, Data, Io, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define AYCE_DEFINE_ERROR(Name, Kind)                                          \
  class Name : public Error {                                                  \
   public:                                                                     \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}   \
  };

// data-model
AYCE_DEFINE_ERROR(MissingFile, Io)
AYCE_DEFINE_ERROR(SchemaError, Data)
AYCE_DEFINE_ERROR(CaptionCountError, Data)
AYCE_DEFINE_ERROR(SpecError, Data)
AYCE_DEFINE_ERROR(EmptyDataset, Data)
AYCE_DEFINE_ERROR(FeatureWidthError, Data)
// metrics
AYCE_DEFINE_ERROR(ZeroVector, Numeric)
AYCE_DEFINE_ERROR(DimensionMismatch, Data)
AYCE_DEFINE_ERROR(TooFewTracks, Data)
AYCE_DEFINE_ERROR(MissingTruth, Data)
// text / visual / training
AYCE_DEFINE_ERROR(EmptyCaption, Data)
AYCE_DEFINE_ERROR(LengthMismatch, Data)
AYCE_DEFINE_ERROR(NonFiniteLoss, Numeric)
AYCE_DEFINE_ERROR(BoxOutOfImage, Data)
AYCE_DEFINE_ERROR(ShapeError, Data)
AYCE_DEFINE_ERROR(AllMasked, Data)
AYCE_DEFINE_ERROR(NonMonotoneIndices, Data)
AYCE_DEFINE_ERROR(NoCandidates, Data)
AYCE_DEFINE_ERROR(ConfigError, Usage)
// io
AYCE_DEFINE_ERROR(CheckpointIOError, Io)
AYCE_DEFINE_ERROR(IOError, Io)
AYCE_DEFINE_ERROR(EmptyStore, Data)

#undef AYCE_DEFINE_ERROR

}  // namespace ayce
