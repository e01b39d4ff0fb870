#pragma once

#include <stdexcept>
#include <string>

namespace repalign {

// Failure categories shared by every module. The C API maps these one-to-one
// onto repalign_status values.
enum class Errc {
  invalid_argument,
  io,
  format,
  non_finite,
  id_mismatch,
  zero_norm,
  degenerate,
  duplicate_key,
  exhausted,
  missing_input,
  config,
  partial,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::io: return "io";
    case Errc::format: return "format";
    case Errc::non_finite: return "non_finite";
    case Errc::id_mismatch: return "id_mismatch";
    case Errc::zero_norm: return "zero_norm";
    case Errc::degenerate: return "degenerate";
    case Errc::duplicate_key: return "duplicate_key";
    case Errc::exhausted: return "exhausted";
    case Errc::missing_input: return "missing_input";
    case Errc::config: return "config";
    case Errc::partial: return "partial";
  }
  return "unknown";
}

}  // namespace repalign
