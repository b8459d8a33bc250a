#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace bft {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Derivative or spectral quantity requested for a kernel that is not
/// mean-square differentiable (exponent != 2).
class DifferentiabilityError : public Error {
public:
    using Error::Error;
};

/// Covariance matrix has negative eigenvalues beyond the jitter budget.
class ConditioningError : public Error {
public:
    using Error::Error;
};

/// Grid sampler asked to work outside its stated accuracy regime.
class AccuracyContractError : public Error {
public:
    using Error::Error;
};

/// Series sampler evaluated outside the truncation-accuracy radius.
class TruncationError : public Error {
public:
    using Error::Error;
};

/// A realization was used with a grid or point set it was not sampled on,
/// or lacks derivative data an operation needs.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Input field violates a consistency requirement (e.g. not solenoidal).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace bft
