#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sslts {

// Exit codes used by the CLI. Keep in sync with README.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitIo = 5,
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sslts
