#pragma once

#include <stdexcept>
#include <string>

namespace feller {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid input values (bad parameters, broken invariants).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Two objects were built on incompatible discretizations.
class GridMismatch : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A solver declined to run because its convergence conditions do not hold.
class NumericalRefusal : public Error {
 public:
  using Error::Error;
};

// A grid solution left the bounded regime (|h| > blow-up threshold).
class BlowUpError : public NumericalRefusal {
 public:
  using NumericalRefusal::NumericalRefusal;
};

// An unpruned cluster exceeded the hard node cap.
class ClusterOverflow : public Error {
 public:
  using Error::Error;
};

}  // namespace feller
