#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tinydet {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidShape : public Error {
public:
    using Error::Error;
};

class IndexOutOfBounds : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class MissingBatchNorm : public Error {
public:
    using Error::Error;
};

class UnsupportedPool : public Error {
public:
    using Error::Error;
};

class InvalidInputSize : public Error {
public:
    using Error::Error;
};

class MalformedHeader : public Error {
public:
    using Error::Error;
};

// Darknet weight file did not contain exactly the expected parameter block.
class WeightCountMismatch : public Error {
public:
    WeightCountMismatch(std::size_t expected_floats, std::size_t actual_bytes)
        : Error("weight count mismatch: expected " + std::to_string(expected_floats) +
                " floats (" + std::to_string(expected_floats * 4) + " bytes), file holds " +
                std::to_string(actual_bytes) + " bytes of parameters"),
          expected_floats(expected_floats),
          actual_bytes(actual_bytes) {}

    std::size_t expected_floats;
    std::size_t actual_bytes;
};

class LayoutMismatch : public Error {
public:
    using Error::Error;
};

class InvalidBox : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

class InvalidAnchorCount : public Error {
public:
    using Error::Error;
};

class NoGroundTruth : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + msg), line(line) {}

    std::size_t line;
};

class OutOfRange : public Error {
public:
    using Error::Error;
};

class UnsupportedFormat : public Error {
public:
    using Error::Error;
};

class TruncatedFile : public Error {
public:
    using Error::Error;
};

class UnsupportedDepth : public Error {
public:
    using Error::Error;
};

}  // namespace tinydet
