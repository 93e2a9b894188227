#pragma once

#include <stdexcept>
#include <string>

namespace c4net {

// Incompatible tensor extents.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// A precondition that is not about shapes (even kernel, non-scalar loss, ...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Malformed file contents (netpbm, checkpoint, config).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace c4net
