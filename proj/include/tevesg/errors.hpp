#pragma once

#include <stdexcept>
#include <string>

namespace tevesg {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration: unusable option values, contradictory flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File system failure: unreadable input, unwritable output.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical degeneracy: the requested quantity is undefined for this input.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Covariance matrix failed the positive definiteness check.
class NotPositiveDefinite : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Frontier scalars are degenerate (D = BC - A^2 vanishes, mu ~ 1).
class DegenerateUniverse : public NumericError {
 public:
  using NumericError::NumericError;
};

/// ESG score direction is collinear with the other constraints, so the
/// binding KKT system has no unique solution.
class SingularEsgDirection : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Sample covariance is singular (too few observations or collinear series).
class SingularCovariance : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A series required to carry variation is constant (e.g. zero residual).
class DegenerateSeries : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A series whose variance divides a formula has zero variance.
class ZeroVariance : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Regression design matrix does not have full column rank.
class RankDeficientDesign : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Constrained problem admits no solution.
class Infeasible : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Containers that must agree in length or shape do not.
class DimensionMismatch : public DataError {
 public:
  using DataError::DataError;
};

/// Text input violates the expected schema.
class ParseError : public DataError {
 public:
  using DataError::DataError;
};

/// Panel contains no usable observations.
class EmptyPanel : public DataError {
 public:
  using DataError::DataError;
};

/// A month has no ESG score across the whole cross-section.
class NoScoresInMonth : public DataError {
 public:
  using DataError::DataError;
};

/// Every candidate portfolio group was filtered away.
class EmptyGroup : public DataError {
 public:
  using DataError::DataError;
};

/// Cross-sectional inputs cover different samples.
class MismatchedSamples : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace tevesg
