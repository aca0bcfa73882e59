#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftcs {

template <int D>
using Point = std::array<double, D>;

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public Error {
public:
    LengthMismatch(const std::string& what, std::size_t expected, std::size_t got)
        : Error(what + ": expected length " + std::to_string(expected) + ", got " + std::to_string(got)),
          expected(expected), got(got) {}
    std::size_t expected;
    std::size_t got;
};

class OutOfTemporalRange : public Error {
public:
    OutOfTemporalRange(double t, double first, double last)
        : Error("time " + std::to_string(t) + " outside snapshot span [" + std::to_string(first) + ", " +
                std::to_string(last) + "]"),
          time(t) {}
    double time;
};

/// A trajectory left a bounded (gridded) domain. Carries the offending location and time.
class OutOfSpatialDomain : public Error {
public:
    OutOfSpatialDomain(std::vector<double> where, double t)
        : Error("point left the spatial domain at t=" + std::to_string(t)), location(std::move(where)), time(t) {}
    std::vector<double> location;
    double time;
};

class NonCommensurate : public Error {
public:
    using Error::Error;
};

class AllMassLost : public Error {
public:
    AllMassLost() : Error("every sample left the domain") {}
};

class MeasureDegenerate : public Error {
public:
    using Error::Error;
};

class NegativeWeight : public Error {
public:
    NegativeWeight(std::size_t index, double value)
        : Error("negative measure weight " + std::to_string(value) + " at box " + std::to_string(index)),
          index(index) {}
    std::size_t index;
};

class NoConvergence : public Error {
public:
    NoConvergence(int iterations, double residual)
        : Error("no convergence after " + std::to_string(iterations) + " iterations (residual " +
                std::to_string(residual) + ")"),
          iterations(iterations), residual(residual) {}
    int iterations;
    double residual;
};

class ZeroMassSet : public Error {
public:
    ZeroMassSet() : Error("set has zero reference mass") {}
};

class DegenerateVector : public Error {
public:
    DegenerateVector() : Error("vector is constant; no threshold split exists") {}
};

class TooLarge : public Error {
public:
    TooLarge(std::size_t m, std::size_t n, std::size_t limit)
        : Error("brute force limited to m,n <= " + std::to_string(limit) + " (got " + std::to_string(m) + "x" +
                std::to_string(n) + ")") {}
};

class IoError : public Error {
public:
    IoError(const std::string& msg, std::string path) : Error(msg + ": " + path), path(std::move(path)) {}
    std::string path;
};

class ManifestInvalid : public Error {
public:
    using Error::Error;
};

class SizeMismatch : public Error {
public:
    using Error::Error;
};

class NonMonotoneAxis : public Error {
public:
    explicit NonMonotoneAxis(int axis)
        : Error("axis " + std::to_string(axis) + " is not strictly increasing"), axis(axis) {}
    int axis;
};

/// Missing or malformed configuration; `key` names the offending entry.
class ConfigError : public Error {
public:
    ConfigError(const std::string& msg, std::string key) : Error(msg + ": '" + key + "'"), key(std::move(key)) {}
    std::string key;
};

} // namespace ftcs
