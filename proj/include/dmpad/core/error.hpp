#pragma once

#include <stdexcept>
#include <string>

namespace dmpad {

// Input or configuration problems the caller can fix (bad manifest, bad flag).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Failures while doing the work (I/O, numerical breakdown, missing artifacts).
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dmpad
