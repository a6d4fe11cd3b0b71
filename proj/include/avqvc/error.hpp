#pragma once

#include <stdexcept>
#include <string>

namespace avqvc {

// Every failure the library raises is an avqvc::Error carrying a category.
// The CLI maps categories to process exit codes.
enum class ErrorKind {
  config,         // bad configuration value or unknown key
  shape,          // matrix/vector dimensions disagree
  numeric,        // non-finite value where finite is required
  data,           // corpus or input data violates a precondition
  decode,         // file could not be parsed
  empty_input,    // zero-length audio
  too_short,      // clip shorter than one analysis window
  load,           // checkpoint version mismatch or corruption
  compatibility,  // feature configs disagree
  io              // filesystem failure
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::data: return "data error";
    case ErrorKind::decode: return "decode error";
    case ErrorKind::empty_input: return "empty-input error";
    case ErrorKind::too_short: return "too-short error";
    case ErrorKind::load: return "load error";
    case ErrorKind::compatibility: return "compatibility error";
    case ErrorKind::io: return "io error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// 0 success, 1 usage/config, 2 data, 3 numeric failure.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::compatibility:
      return 1;
    case ErrorKind::numeric:
      return 3;
    default:
      return 2;
  }
}

}  // namespace avqvc
