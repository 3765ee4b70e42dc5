#pragma once

#include <stdexcept>
#include <string>

namespace kdvred {

/// Invalid input: a violated precondition or malformed configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not deliver its postcondition
/// (integration blow-up, loss of branch tracking, unstable background).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace kdvred
