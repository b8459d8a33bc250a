#include "bft/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace bft {

namespace {

void require_differentiable(const Kernel& kernel, const char* what) {
    kernel.validate();
    if (!kernel.is_differentiable()) {
        throw DifferentiabilityError(std::string(what) + ": kernel exponent must be 2, got " +
                                     std::to_string(kernel.exponent));
    }
}

}  // namespace

void Kernel::validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(amplitude) || !positive(corr_length) || !positive(exponent)) {
        throw PreconditionError("kernel parameters C, lambda, kappa must be positive and finite");
    }
}

double eval_kernel(const Kernel& kernel, const Vec3& x, const Vec3& y) {
    const double r = (x - y).norm();
    const double arg = kernel.exponent == 2.0 ? (r * r) / (kernel.corr_length * kernel.corr_length)
                                              : std::pow(r / kernel.corr_length, kernel.exponent);
    if (arg > kUnderflowClamp) return 0.0;
    return kernel.amplitude * std::exp(-arg);
}

Vec3 eval_kernel_grad(const Kernel& kernel, const Vec3& x, const Vec3& y) {
    require_differentiable(kernel, "eval_kernel_grad");
    const double inv_l2 = 1.0 / (kernel.corr_length * kernel.corr_length);
    return (-2.0 * inv_l2 * eval_kernel(kernel, x, y)) * (x - y);
}

Mat3 eval_kernel_cross_hessian(const Kernel& kernel, const Vec3& x, const Vec3& y) {
    require_differentiable(kernel, "eval_kernel_cross_hessian");
    const double inv_l2 = 1.0 / (kernel.corr_length * kernel.corr_length);
    const Vec3 d = x - y;
    const double sigma = eval_kernel(kernel, x, y);
    return sigma * (2.0 * inv_l2 * Mat3::Identity() - 4.0 * inv_l2 * inv_l2 * (d * d.transpose()));
}

double eval_kernel_laplacian(const Kernel& kernel, const Vec3& x, const Vec3& y) {
    require_differentiable(kernel, "eval_kernel_laplacian");
    const double s = 1.0 / (kernel.corr_length * kernel.corr_length);
    const double r2 = (x - y).squaredNorm();
    return (4.0 * s * s * r2 - 6.0 * s) * eval_kernel(kernel, x, y);
}

Vec3 eval_kernel_laplacian_grad(const Kernel& kernel, const Vec3& x, const Vec3& y) {
    require_differentiable(kernel, "eval_kernel_laplacian_grad");
    const double s = 1.0 / (kernel.corr_length * kernel.corr_length);
    const double r2 = (x - y).squaredNorm();
    return ((20.0 * s * s - 8.0 * s * s * s * r2) * eval_kernel(kernel, x, y)) * (x - y);
}

double eval_kernel_bilaplacian(const Kernel& kernel, const Vec3& x, const Vec3& y) {
    require_differentiable(kernel, "eval_kernel_bilaplacian");
    const double s = 1.0 / (kernel.corr_length * kernel.corr_length);
    const double q = s * (x - y).squaredNorm();
    return s * s * (60.0 - 80.0 * q + 16.0 * q * q) * eval_kernel(kernel, x, y);
}

double spectral_density_radial(const Kernel& kernel, double k_norm) {
    require_differentiable(kernel, "spectral_density");
    const double l = kernel.corr_length;
    return kernel.amplitude * std::pow(kPi, 1.5) * l * l * l * std::exp(-0.25 * l * l * k_norm * k_norm);
}

double spectral_density(const Kernel& kernel, const Vec3& k) {
    return spectral_density_radial(kernel, k.norm());
}

CovarianceMatrix kernel_matrix(const Kernel& kernel, std::span<const Vec3> points) {
    kernel.validate();
    if (points.empty()) throw PreconditionError("kernel_matrix: point set is empty");
    for (const auto& p : points) {
        if (!p.allFinite()) throw PreconditionError("kernel_matrix: non-finite point coordinate");
    }

    const auto n = static_cast<Eigen::Index>(points.size());
    CovarianceMatrix out;
    out.points.assign(points.begin(), points.end());
    out.entries.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.entries(i, i) = kernel.amplitude;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = eval_kernel(kernel, points[i], points[j]);
            out.entries(i, j) = v;
            out.entries(j, i) = v;
        }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.entries, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = eig.eigenvalues()(0);
    const double budget = kPsdJitter * kernel.amplitude;
    if (out.min_eigenvalue < -budget) {
        throw ConditioningError("kernel_matrix: smallest eigenvalue " + std::to_string(out.min_eigenvalue) +
                                " is below the jitter budget -" + std::to_string(budget));
    }
    if (out.min_eigenvalue < 0.0) {
        out.jitter = budget;
        out.entries.diagonal().array() += budget;
    }
    return out;
}

}  // namespace bft
