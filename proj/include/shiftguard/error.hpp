#pragma once

#include <stdexcept>
#include <string>

namespace shiftguard {

// Precondition or shape violation at an API boundary.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or inconsistent on-disk data (bundles, checkpoints, configs).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// The confident-normal intersection came back empty.
class NoConfidentNormals : public std::runtime_error {
 public:
  NoConfidentNormals() : std::runtime_error("no confident normals") {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace shiftguard
