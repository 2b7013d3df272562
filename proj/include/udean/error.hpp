#pragma once

#include <stdexcept>
#include <string>

namespace udean {

/// Base class for every error the library raises on its own account.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or malformed files, header/payload mismatches.
class IoError : public Error {
public:
    using Error::Error;
};

/// Shape or scale contract violations between volumes, patches and networks.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration: unknown keys, out-of-range values, incompatible checkpoints.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A loss or metric became non-finite during training.
class NumericAbort : public Error {
public:
    using Error::Error;
};

}  // namespace udean
