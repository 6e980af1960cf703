#pragma once

#include <stdexcept>
#include <string>

namespace roadsim {

// Argument outside the mathematical domain of an operation (e.g. tau > 1).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input data: shape mismatches, schema violations, empty inputs.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An object was found in a state its operation cannot proceed from.
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

} // namespace roadsim
