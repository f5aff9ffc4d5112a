#pragma once

#include <stdexcept>
#include <string>

namespace geoseg {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// numerics
struct ShapeError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct EvalError : Error { using Error::Error; };

// geometry
struct CameraError : Error { using Error::Error; };
struct ProjectionError : Error { using Error::Error; };

// gasa
struct InitError : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };

// spatial
struct ParseError : Error { using Error::Error; };
struct ResolutionError : Error { using Error::Error; };

// scenegen
struct GenerationError : Error { using Error::Error; };
struct DatasetVersionError : Error { using Error::Error; };
struct DatasetTruncatedError : Error { using Error::Error; };
struct DatasetChecksumError : Error { using Error::Error; };

// harness
struct TrainAbortError : Error { using Error::Error; };

}  // namespace geoseg
