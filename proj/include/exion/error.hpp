#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace exion {

// Value does not fit its declared bit-width, or an accumulator overflowed.
class RangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

// Invalid experiment or architecture configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Internal bookkeeping disagrees with itself (e.g. a merged tile that does not
// reproduce its mask).
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace exion
