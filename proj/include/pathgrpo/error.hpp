#pragma once

#include <stdexcept>
#include <string>

namespace pathgrpo {

// Base of every exception thrown by the library. Callers that only care about
// "something in pathgrpo failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace pathgrpo
