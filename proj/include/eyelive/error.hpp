#pragma once

#include <stdexcept>
#include <string>

namespace eyelive {

enum class errc {
  manifest_invalid,
  degenerate_geometry,
  timestamp_order,
  unknown_word,
  session_closed,
  parse_error,
  config_mismatch,
  io_error,
};

inline const char* to_string(errc code) {
  switch (code) {
    case errc::manifest_invalid: return "manifest_invalid";
    case errc::degenerate_geometry: return "degenerate_geometry";
    case errc::timestamp_order: return "timestamp_order";
    case errc::unknown_word: return "unknown_word";
    case errc::session_closed: return "session_closed";
    case errc::parse_error: return "parse_error";
    case errc::config_mismatch: return "config_mismatch";
    case errc::io_error: return "io_error";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace eyelive
