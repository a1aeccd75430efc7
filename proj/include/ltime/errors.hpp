#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ltime {

// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Evaluation left the real domain: log/sqrt of a negative, division by zero,
// overflow, or a zero diffusion coefficient.
class DomainError : public Error {
public:
    DomainError(const std::string& reason, std::string node, double x)
        : Error(reason + " in '" + node + "' at x=" + format_x(x)), node_(std::move(node)), x_(x) {}

    const std::string& node() const noexcept { return node_; }
    double x() const noexcept { return x_; }

private:
    static std::string format_x(double x);

    std::string node_;
    double x_;
};

class QuadratureError : public Error {
public:
    using Error::Error;
};

// A tail integral neither converged nor certified divergent within the round budget.
class InconclusiveError : public Error {
public:
    using Error::Error;
};

// Both scale-function tails diverge; local times are a.s. infinite.
class RecurrentModelError : public Error {
public:
    using Error::Error;
};

class PreconditionFailed : public Error {
public:
    using Error::Error;
};

class LambdaTooLarge : public Error {
public:
    using Error::Error;
};

class Cancelled : public Error {
public:
    Cancelled() : Error("computation cancelled") {}
};

}  // namespace ltime
