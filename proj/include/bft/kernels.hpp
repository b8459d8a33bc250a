#pragma once

#include "bft/core.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace bft {

/// Stationary isotropic covariance C * exp(-|x - y|^kappa / lambda^kappa).
///
/// kappa = 2 is the Bargmann-Fock (squared-exponential) case; it is the only
/// exponent for which the field is mean-square differentiable, so every
/// derivative and spectral query below requires it.
struct Kernel {
    double amplitude = 1.0;    ///< C, the variance at coincident points
    double corr_length = 1.0;  ///< lambda
    double exponent = 2.0;     ///< kappa

    /// Throws PreconditionError unless C, lambda and kappa are all positive
    /// and finite.
    void validate() const;

    bool is_differentiable() const noexcept { return exponent == 2.0; }

    friend bool operator==(const Kernel&, const Kernel&) = default;
};

/// Exponent-argument threshold above which eval_kernel returns exactly 0.
inline constexpr double kUnderflowClamp = 700.0;

/// Relative diagonal jitter allowed when a kernel matrix is numerically
/// indefinite; applied at most once.
inline constexpr double kPsdJitter = 1e-10;

double eval_kernel(const Kernel& kernel, const Vec3& x, const Vec3& y);

/// Gradient of the kernel with respect to its first argument:
/// -(2 / lambda^2) (x - y) Sigma(x, y).
Vec3 eval_kernel_grad(const Kernel& kernel, const Vec3& x, const Vec3& y);

/// Mixed second derivative d^2 Sigma / dx_i dy_j:
/// (2 delta_ij / lambda^2 - 4 d_i d_j / lambda^4) Sigma with d = x - y.
Mat3 eval_kernel_cross_hessian(const Kernel& kernel, const Vec3& x, const Vec3& y);

/// Laplacian of the kernel in either argument: (4 r^2/lambda^4 - 6/lambda^2) Sigma.
double eval_kernel_laplacian(const Kernel& kernel, const Vec3& x, const Vec3& y);

/// Gradient in x of the y-Laplacian: (20/lambda^4 - 8 r^2/lambda^6) (x - y) Sigma.
Vec3 eval_kernel_laplacian_grad(const Kernel& kernel, const Vec3& x, const Vec3& y);

/// Laplacian in x of the y-Laplacian:
/// (60/lambda^4 - 80 r^2/lambda^6 + 16 r^4/lambda^8) Sigma.
double eval_kernel_bilaplacian(const Kernel& kernel, const Vec3& x, const Vec3& y);

/// Three-dimensional Fourier transform of the kernel, normalised so that
/// (2 pi)^-3 * integral S(k) dk = C:  S(k) = C pi^{3/2} lambda^3 exp(-lambda^2 |k|^2 / 4).
double spectral_density(const Kernel& kernel, const Vec3& k);

/// Radial form of spectral_density, for callers that only have |k|.
double spectral_density_radial(const Kernel& kernel, double k_norm);

struct CovarianceMatrix {
    std::vector<Vec3> points;
    Eigen::MatrixXd entries;
    double jitter = 0.0;           ///< diagonal shift actually applied
    double min_eigenvalue = 0.0;   ///< before jitter
};

/// Pairwise kernel evaluations over a point set.
///
/// The spectrum is inspected: if the smallest eigenvalue lies in
/// [-kPsdJitter*C, 0) the diagonal is shifted once by kPsdJitter*C; anything
/// more negative raises ConditioningError. Non-Gaussian exponents (kappa > 2)
/// are not positive definite in three dimensions and can hit that error.
CovarianceMatrix kernel_matrix(const Kernel& kernel, std::span<const Vec3> points);

}  // namespace bft
