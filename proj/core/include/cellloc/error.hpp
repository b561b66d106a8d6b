#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cellloc {

/// Bad configuration or arguments supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data that violates a dataset or model invariant (malformed CSV,
/// out-of-range RSSI, inconsistent widths, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An internal invariant failed. Seeing one of these is a bug.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Sink for non-fatal diagnostics (e.g. single-class training data).
/// Defaults to stderr; pass nullptr to silence.
using WarningSink = void (*)(std::string_view);
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace cellloc
