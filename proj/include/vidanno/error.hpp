#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vidanno {

enum class ErrorKind {
  Domain,
  Conflict,
  Capacity,
  NotFound,
  State,
  Format,
  Io,
  Busy,
  Precondition,
  UnsupportedVersion,
  MissingMedia,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::State: return "state";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::Busy: return "busy";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::UnsupportedVersion: return "unsupported_version";
    case ErrorKind::MissingMedia: return "missing_media";
  }
  return "unknown";
}

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace vidanno
