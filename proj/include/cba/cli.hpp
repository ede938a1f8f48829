#pragma once

#include "cba/runner.hpp"

namespace cba {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when --help is requested; carries the usage text.
struct HelpRequested : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses CLI flags into a RunConfig; throws ConfigError with a usage-style
// message on unknown flags, type errors, or constraint violations.
RunConfig parse_config(const std::vector<std::string>& args);

}  // namespace cba
