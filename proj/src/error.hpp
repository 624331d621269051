#pragma once

#include <stdexcept>
#include <string>

namespace evuav {

enum class ErrorKind {
  Parse,       // malformed file or config text
  Validation,  // well-formed input that violates a domain invariant
  Contract,    // caller broke an operation precondition
  Io,          // filesystem failure
  Runtime,     // numerical or internal failure during a run
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::Contract, what);
}

}  // namespace evuav
