#pragma once

#include <stdexcept>
#include <string>

namespace clears {

/// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Input data (corpus, adapt output, fixture, config) failed to parse or validate.
class DataError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    BackendError(const std::string& what, int status, int attempts)
        : Error(what), status_(status), attempts_(attempts) {}

    /// HTTP status of the last attempt; 0 for transport-level failures.
    int status() const noexcept { return status_; }
    int attempts() const noexcept { return attempts_; }

private:
    int status_;
    int attempts_;
};

}  // namespace clears
