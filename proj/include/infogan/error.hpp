#pragma once

#include <stdexcept>
#include <string>

namespace infogan {

// Shape or structure mismatch between tensors, configs or files.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mathematical domain violation (log of non-positive, exp overflow, ...).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller misuse: bad arguments, unknown config keys, invalid hyperparameters.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents (bad magic, truncated payload, version mismatch).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unreadable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf appearing during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace infogan
