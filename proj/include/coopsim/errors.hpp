#pragma once

#include <stdexcept>
#include <string>

namespace coopsim {

// Process exit codes shared by the CLI and the test harness.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitInternal = 3,
};

// Invalid user input: unknown flags, malformed configs, impossible requests.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken or inconsistent data on disk.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unsupported format version in an otherwise well-formed container.
class VersionError : public DataError {
 public:
  using DataError::DataError;
};

// File ends before the declared payload does.
class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

// Stored checksum does not match the recomputed one.
class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

// A violated internal invariant. Indicates a bug, not bad input.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace coopsim
