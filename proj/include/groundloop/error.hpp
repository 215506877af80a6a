#pragma once

#include <stdexcept>
#include <string>

namespace groundloop {

// Failure classes. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  kContract = 1,         // precondition violated by the caller
  kConfig = 2,           // usage or configuration problem
  kIo = 3,               // file could not be read or written
  kSnapshotVersion = 4,  // unrecognized snapshot format version
  kSnapshotDigest = 4,   // content digest does not match
  kNumeric = 5,          // non-finite loss or diverged training
  kGeneration = 6,       // scene/query generator could not satisfy config
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Snapshot failures share an exit code but stay distinguishable in-process.
class SnapshotVersionError : public Error {
 public:
  explicit SnapshotVersionError(const std::string& what)
      : Error(ErrorKind::kSnapshotVersion, what) {}
};

class SnapshotDigestError : public Error {
 public:
  explicit SnapshotDigestError(const std::string& what)
      : Error(ErrorKind::kSnapshotDigest, what) {}
};

[[noreturn]] inline void contract_violation(const std::string& what) {
  throw Error(ErrorKind::kContract, what);
}

inline void require(bool cond, const char* what) {
  if (!cond) contract_violation(what);
}

}  // namespace groundloop
