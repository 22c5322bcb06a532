#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace cfdr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A constructor argument broke a type invariant (non-normalized d0, negative std, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// The target policy puts mass on an action the (augmented) behavior policy never takes.
class CoverageViolation : public Error {
public:
    CoverageViolation(Eigen::Index context, Eigen::Index action, const std::string& what)
        : Error(what), context_(context), action_(action) {}

    Eigen::Index context() const noexcept { return context_; }
    Eigen::Index action() const noexcept { return action_; }

private:
    Eigen::Index context_;
    Eigen::Index action_;
};

class WeightSumViolation : public Error {
public:
    using Error::Error;
};

class DegenerateSupport : public Error {
public:
    using Error::Error;
};

/// Some cell required by a closed form has zero visit probability.
class RealizabilityViolation : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace cfdr
