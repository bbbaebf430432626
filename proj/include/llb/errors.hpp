#pragma once

#include <stdexcept>
#include <string>

namespace llb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, int layer = -1)
      : std::runtime_error(what), layer_(layer) {}
  /// Index of the layer that produced the non-finite value, -1 if not layer-specific.
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

class MissingHeadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace llb
