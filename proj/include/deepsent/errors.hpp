#pragma once

#include <stdexcept>
#include <string>

namespace deepsent {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class TrainingError : public Error { using Error::Error; };
class CheckError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class CheckpointError : public Error { using Error::Error; };

}  // namespace deepsent
