#pragma once

#include <stdexcept>
#include <string>

namespace pforge {

// Base for every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input failed a precondition or schema check (maps to CLI exit code 1).
class ValidationError : public Error {
public:
    using Error::Error;
};

// External system or runtime failure (maps to CLI exit code 2).
class RuntimeFailure : public Error {
public:
    using Error::Error;
};

}  // namespace pforge
