#pragma once

#include <stdexcept>
#include <string>

namespace textdet {

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NonConvexInput : std::runtime_error {
  explicit NonConvexInput(const std::string& what) : std::runtime_error(what) {}
};

struct TargetOutOfRange : std::runtime_error {
  explicit TargetOutOfRange(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
  ParseError(int line, const std::string& reason)
      : std::runtime_error("line " + std::to_string(line) + ": " + reason), line_number(line) {}
  int line_number;
};

struct KeyMismatch : std::runtime_error {
  explicit KeyMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct DivergenceDetected : std::runtime_error {
  explicit DivergenceDetected(const std::string& what) : std::runtime_error(what) {}
};

struct PlacementFailure : std::runtime_error {
  explicit PlacementFailure(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace textdet
