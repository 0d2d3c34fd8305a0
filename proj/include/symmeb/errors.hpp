#pragma once

#include <stdexcept>
#include <string>

namespace symmeb {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// config errors -> 2, data/shape errors -> 3, numerical failures -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : DataError {
  using DataError::DataError;
};
struct ShapeMismatch : DataError {
  using DataError::DataError;
};
struct EmptyData : DataError {
  using DataError::DataError;
};
struct EmptyBatch : DataError {
  using DataError::DataError;
};
struct UnknownGenerator : DataError {
  using DataError::DataError;
};
struct FlavorMismatch : DataError {
  using DataError::DataError;
};
struct NonSquareJoint : DataError {
  using DataError::DataError;
};
struct NotFitted : DataError {
  using DataError::DataError;
};

struct NotPositiveDefinite : NumericalError {
  using NumericalError::NumericalError;
};
struct NumericalUnderflow : NumericalError {
  using NumericalError::NumericalError;
};
struct RankDeficientDesign : NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace symmeb
