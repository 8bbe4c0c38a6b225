#pragma once

#include <stdexcept>
#include <string>

namespace metatutor {

// Input data or configuration violates a documented invariant. CLI maps this
// to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / stream failure. CLI maps this to exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace metatutor
