#pragma once

#include <stdexcept>
#include <string>

namespace stockcast {

// Exception hierarchy. The CLI maps each family to a distinct exit code.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CSV rows, document files, shapes).
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values or unknown configuration keys.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A model failed to fit, diverged, or was used with incompatible inputs.
class ModelError : public Error {
public:
    using Error::Error;
};

class FetchError : public Error {
public:
    FetchError(const std::string& what, int status) : Error(what), status_(status) {}

    /// HTTP status, or 0 when the request never produced a response.
    int status() const noexcept { return status_; }

private:
    int status_;
};

}  // namespace stockcast
