#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace impdet {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (negative radius, k == 0, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class OutsidePoint : public Error {
public:
    OutsidePoint() : Error("point lies outside the box") {}
};

class EmptyInput : public Error {
public:
    explicit EmptyInput(const std::string& what = "empty input") : Error(what) {}
};

class PlacementFailure : public Error {
public:
    PlacementFailure(std::size_t placed, std::size_t requested)
        : Error("could only place " + std::to_string(placed) + " of " +
                std::to_string(requested) + " objects without overlap"),
          placed_(placed), requested_(requested) {}
    std::size_t placed() const noexcept { return placed_; }
    std::size_t requested() const noexcept { return requested_; }

private:
    std::size_t placed_;
    std::size_t requested_;
};

class IndexOutOfRange : public Error {
public:
    IndexOutOfRange(std::size_t index, std::size_t size)
        : Error("index " + std::to_string(index) + " out of range (size " +
                std::to_string(size) + ")") {}
};

class EmptyCloud : public Error {
public:
    EmptyCloud() : Error("point cloud is empty") {}
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class NoInsidePoints : public Error {
public:
    NoInsidePoints() : Error("no sampled point exceeds the implicit threshold") {}
};

class DivergenceDetected : public Error {
public:
    explicit DivergenceDetected(std::size_t epoch)
        : Error("loss became non-finite at epoch " + std::to_string(epoch)) {}
};

class TruncatedFile : public Error {
public:
    explicit TruncatedFile(std::size_t length)
        : Error("point cloud byte length " + std::to_string(length) +
                " is not a multiple of 16") {}
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, std::string reason)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                ": " + reason),
          line_(line), column_(column), reason_(std::move(reason)) {}
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string reason_;
};

class SchemaError : public Error {
public:
    SchemaError(std::string path, const std::string& reason)
        : Error(path + ": " + reason), path_(std::move(path)) {}
    // JSON path of the violation, e.g. "boxes[2].yaw".
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace impdet
