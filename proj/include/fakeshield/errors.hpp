#pragma once

#include <stdexcept>
#include <string>

namespace fakeshield {

// Caller supplied something unusable (undecodable image, empty upload,
// precondition violated by the arguments).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Component wiring is inconsistent (width mismatch, unknown flag, bad file).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model handle requested before it was loaded.
class UnavailableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fakeshield
