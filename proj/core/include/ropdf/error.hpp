#pragma once

#include <stdexcept>
#include <string>

namespace ropdf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition on a user-supplied argument (sizes, ranges, names).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Run configuration that violates the schema; `path()` names the field,
/// e.g. `estimator.kind`.
class ConfigError : public InvalidArgument {
public:
    ConfigError(const std::string& path, const std::string& message)
        : InvalidArgument(path + ": " + message), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// A numerical procedure could not produce a finite answer.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Explicit time step exceeds the advective stability bound.
class CflError : public NumericalError {
public:
    CflError(const std::string& what, double courant) : NumericalError(what), courant_(courant) {}
    double courant() const noexcept { return courant_; }

private:
    double courant_;
};

/// File contents disagree with their manifest, or a file is truncated.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ropdf
