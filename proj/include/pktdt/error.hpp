#pragma once

#include <stdexcept>
#include <string>

namespace pktdt {

// Base for every error the library raises on bad input data. The CLI maps
// these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public DataError {
 public:
  using DataError::DataError;
};

class NonFiniteLoss : public DataError {
 public:
  using DataError::DataError;
};

class EmptyWindow : public DataError {
 public:
  EmptyWindow() : DataError("empty window") {}
};

}  // namespace pktdt
