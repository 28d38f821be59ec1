#pragma once

#include <stdexcept>
#include <string>

namespace qmarl {

// Every failure raised by the library derives from Error so callers can
// separate library faults from std::bad_alloc and friends.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class WireError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BatchError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ActionError : public Error {
 public:
  using Error::Error;
};

class BudgetInfeasible : public Error {
 public:
  BudgetInfeasible(const std::string& what, long long minimum)
      : Error(what), minimum_(minimum) {}

  /// Smallest parameter count the requested shapes can be built with.
  long long minimum() const noexcept { return minimum_; }

 private:
  long long minimum_;
};

}  // namespace qmarl
