#pragma once

#include <stdexcept>
#include <string>

namespace microtrap {

/// Bad argument to a physics routine (non-positive wavelength, dt above the stability bound, ...).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Laser exactly on an atomic line; the dispersive light-shift model diverges there.
class ResonantLightError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Geometry or run configuration that cannot be realised (empty mask, bad key, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Blue-detuned or otherwise unbound site handed to an operation that needs a trap.
class UnsupportedConfiguration : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoMinimumError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownSiteError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace microtrap
