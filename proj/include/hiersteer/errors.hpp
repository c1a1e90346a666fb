#pragma once

#include <stdexcept>
#include <string>

namespace hiersteer {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not conform for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An argument is outside its permitted range (stride < 1, lr <= 0, bad zone id, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A binary file is malformed: bad magic, unsupported version, truncation.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A checkpoint was written for a different model spec.
class IncompatibleCheckpointError : public Error {
 public:
  using Error::Error;
};

// A lap log was recorded on a different track.
class IncompatibleTrackError : public Error {
 public:
  using Error::Error;
};

// Missing or empty data: empty split, too few laps, empty test set.
class DataError : public Error {
 public:
  using Error::Error;
};

// A track configuration cannot be realised geometrically.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

// The vehicle struck a cone while the oracle was recording.
class RecordingError : public Error {
 public:
  using Error::Error;
};

// An object was used before it was ready (e.g. router without weights).
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hiersteer
