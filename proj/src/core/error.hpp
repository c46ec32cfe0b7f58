#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mlmcmc {

enum class ErrorCode {
  InvalidArgument,
  Config,
  Io,
  Solver,
  Numerical,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

// Takes a view so that literal messages cost nothing on the success path.
inline void require(bool condition, std::string_view what) {
  if (!condition) fail(ErrorCode::InvalidArgument, std::string(what));
}

}  // namespace mlmcmc
