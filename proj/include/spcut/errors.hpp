#pragma once

#include <stdexcept>
#include <string>

namespace spcut {

// Shape/consistency violations: mismatched dimensions, labels out of range,
// empty inputs where at least one element is required.
class StructuralError : public std::runtime_error {
public:
    explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (inputs, gradients, losses).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files; message carries the byte offset where parsing failed.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad command-line or config-file input.
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace spcut
