#pragma once

#include <stdexcept>
#include <string>

namespace sweepsim {

/// Base class for every error raised by the toolkit.
class SweepError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BadDimension : public SweepError {
public:
    using SweepError::SweepError;
};

class NotIrreducible : public SweepError {
public:
    using SweepError::SweepError;
};

class DomainError : public SweepError {
public:
    using SweepError::SweepError;
};

/// Raised when a step is requested on an absorbed configuration.
class AbsorbedState : public SweepError {
public:
    using SweepError::SweepError;
};

class EmptyConfiguration : public SweepError {
public:
    using SweepError::SweepError;
};

class StepSizeTooLarge : public SweepError {
public:
    using SweepError::SweepError;
};

/// The truncated generator leaked at least the tolerated probability mass.
class TruncationError : public SweepError {
public:
    TruncationError(const std::string& what, double overflow_mass)
        : SweepError(what), overflow_mass_(overflow_mass) {}
    double overflow_mass() const noexcept { return overflow_mass_; }

private:
    double overflow_mass_;
};

class BudgetExceeded : public SweepError {
public:
    using SweepError::SweepError;
};

class Unreachable : public SweepError {
public:
    using SweepError::SweepError;
};

class ConfigError : public SweepError {
public:
    using SweepError::SweepError;
};

}  // namespace sweepsim
