#pragma once

#include <stdexcept>
#include <string>

namespace tfc {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file (bad JSON, missing or mistyped fields).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Semantically invalid data (disconnected graph, nonpositive parameters, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Laplacian nullspace larger than span{1} (disconnected network reached a solve).
class SingularityError : public Error {
public:
    using Error::Error;
};

/// Iterative solver exhausted its iteration budget.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Newton iterate left the closed angle box and could not be recovered.
class OutsideGammaError : public Error {
public:
    using Error::Error;
};

/// A required optional parameter was not supplied.
class MissingParameterError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of the operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A sought event was not attained within the configured horizon.
class NotReachedError : public Error {
public:
    using Error::Error;
};

/// Optimization feasible set is empty.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// Bus degree exceeds the enumeration guard.
class DegreeError : public Error {
public:
    using Error::Error;
};

/// Error-signal amplitude exceeds its declared uncertainty bound.
class BoundError : public Error {
public:
    using Error::Error;
};

/// Simulated state exceeded the blow-up guard.
class BlowupError : public Error {
public:
    using Error::Error;
};

} // namespace tfc
