#pragma once

#include <stdexcept>
#include <string>

namespace pq {

/// Malformed or inconsistent on-disk data (missing files, bad headers,
/// schema violations, cross-file dimension mismatches).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when consensus filtering leaves no reliable mask sequence to
/// supervise the lifting stage.
class NoReliableEvidence : public std::runtime_error {
 public:
  explicit NoReliableEvidence(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pq
