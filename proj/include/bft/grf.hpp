#pragma once

#include "bft/core.hpp"
#include "bft/fft.hpp"
#include "bft/grid.hpp"
#include "bft/kernels.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <variant>
#include <vector>

namespace bft {

using PointSet = std::shared_ptr<const std::vector<Vec3>>;

/// Where a realization lives: an explicit point list or a periodic grid.
using Locus = std::variant<PointSet, GridSpec>;

/// One sample of the Bargmann-Fock field B and, when the sampler was asked
/// for them, its gradient and Laplacian at the same sites.
struct FieldRealization {
    Locus locus;
    Kernel kernel;
    std::vector<double> values;
    std::vector<Vec3> gradient;     ///< empty unless derivatives were sampled
    std::vector<double> laplacian;  ///< empty unless requested (grid only)
    std::uint64_t seed = 0;
    std::uint64_t realization_index = 0;

    std::size_t size() const noexcept { return values.size(); }
    bool has_gradient() const noexcept { return !gradient.empty(); }
    bool has_laplacian() const noexcept { return !laplacian.empty(); }
    bool on_grid() const noexcept { return std::holds_alternative<GridSpec>(locus); }
    Vec3 site(std::size_t i) const;

    /// The same draw with every Gaussian variate sign-flipped (the antithetic
    /// partner; equally likely under the zero-mean measure).
    FieldRealization negated() const;
};

/// Which derivative fields a sampler produces alongside B.
struct Derivatives {
    bool gradient = false;
    bool laplacian = false;
};

/// Draws zero-mean Gaussian vectors with the exact kernel covariance at a
/// fixed point set, via a symmetric eigen-factorisation M = F F^T applied to
/// independent normals keyed by (seed, realization_index, site).
///
/// With derivatives the joint law of (B, dB/dx, dB/dy, dB/dz, Laplacian B)
/// at every point is sampled (the requested subset); this needs a
/// differentiable kernel.
class ExactSampler {
public:
    ExactSampler(const Kernel& kernel, std::vector<Vec3> points, Derivatives derivatives = {});

    FieldRealization draw(std::uint64_t seed, std::uint64_t realization_index) const;

    const Kernel& kernel() const noexcept { return kernel_; }
    const PointSet& points() const noexcept { return points_; }
    Derivatives derivatives() const noexcept { return derivatives_; }
    /// Dimension of the sampled Gaussian vector (n times 1, 4 or 5).
    Eigen::Index dimension() const noexcept { return factor_.rows(); }
    const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }
    double jitter() const noexcept { return jitter_; }

private:
    Kernel kernel_;
    PointSet points_;
    Derivatives derivatives_;
    int stride_ = 1;
    Eigen::MatrixXd covariance_;
    Eigen::MatrixXd factor_;
    double jitter_ = 0.0;
};

std::vector<FieldRealization> sample_exact(const Kernel& kernel, std::span<const Vec3> points, std::uint64_t seed,
                                           std::uint64_t count);

/// Periodic stationary field synthesis on a grid by filtering white noise in
/// Fourier space (circulant embedding of the periodised kernel).
///
/// The variance spectrum is the kernel spectral density folded over the
/// grid's alias images, so the covariance at grid lags equals the periodised
/// kernel exactly, at any resolution. Derivatives are exact spectral
/// derivatives of the same modes and need the spectrum resolved: they require
/// h <= lambda / 3. Every sampler requires lambda <= L / 8.
class SpectralSampler {
public:
    SpectralSampler(const Kernel& kernel, const GridSpec& grid, Derivatives derivatives = {});

    FieldRealization draw(std::uint64_t seed, std::uint64_t realization_index) const;

    /// Exact covariance between sites separated by the integer lag, as
    /// implied by the synthesis spectrum.
    double model_covariance(const std::array<int, 3>& lag) const;
    /// Exact E[dB/dx_a dB/dx_a] of the synthesized field (same for all a).
    double model_gradient_variance() const;

    const GridSpec& grid() const noexcept { return ops_.grid(); }
    const Kernel& kernel() const noexcept { return kernel_; }
    const SpectralOps& ops() const noexcept { return ops_; }
    Derivatives derivatives() const noexcept { return options_; }

private:
    Kernel kernel_;
    Derivatives options_;
    SpectralOps ops_;
    std::vector<double> axis_spectrum_;  ///< folded 1-D factor per FFT bin
    std::vector<double> amplitude_;      ///< per half-spectrum bin
};

/// Either sampler behind one interface, for code that only needs draws at
/// sites (grid sites enumerate in storage order).
class FieldSource {
public:
    FieldSource(std::shared_ptr<const ExactSampler> exact) : exact_(std::move(exact)) {}
    FieldSource(std::shared_ptr<const SpectralSampler> grid) : grid_(std::move(grid)) {}

    FieldRealization draw(std::uint64_t seed, std::uint64_t realization_index) const {
        return exact_ ? exact_->draw(seed, realization_index) : grid_->draw(seed, realization_index);
    }
    std::size_t size() const noexcept {
        return exact_ ? exact_->points()->size() : grid_->grid().site_count();
    }
    Vec3 site(std::size_t i) const { return exact_ ? (*exact_->points())[i] : grid_->grid().site(i); }
    Derivatives derivatives() const noexcept { return exact_ ? exact_->derivatives() : grid_->derivatives(); }
    const Kernel& kernel() const noexcept { return exact_ ? exact_->kernel() : grid_->kernel(); }
    /// The spectral sampler, or null for point sets.
    const SpectralSampler* grid_sampler() const noexcept { return grid_.get(); }

private:
    std::shared_ptr<const ExactSampler> exact_;
    std::shared_ptr<const SpectralSampler> grid_;
};

FieldRealization sample_grid_spectral(const Kernel& kernel, const GridSpec& grid, std::uint64_t seed,
                                      std::uint64_t realization_index, bool with_gradient);

/// Checks the accuracy contract of SpectralSampler without building one.
void check_spectral_contract(const Kernel& kernel, const GridSpec& grid, bool derivatives);

/// Truncated random-entire-function representation
///   B(x) = sqrt(C) exp(-|x|^2/lambda^2) sum_i alpha_i prod_a (sqrt(2) x_a/lambda)^{i_a} / sqrt(i_a!)
/// with i_a in [0, n_max] and x measured from the expansion origin.
/// Points farther than lambda sqrt(n_max) / 2 from the origin raise
/// TruncationError.
FieldRealization sample_series(const Kernel& kernel, std::span<const Vec3> points, int n_max, std::uint64_t seed,
                               std::uint64_t realization_index = 0, const Vec3& origin = Vec3::Zero());

/// Midpoint-rule volume integral of a grid realization.
double integrate_field(const FieldRealization& realization, const GridSpec& grid);

/// Midpoint double quadrature of the kernel over the periodic cell with
/// minimum-image separations: the variance of integrate_field.
double integral_variance_quadrature(const Kernel& kernel, const GridSpec& grid);

struct MomentBoundReport {
    int order = 2;
    double moment = 0.0;  ///< Monte-Carlo E|int B|^order
    double std_error = 0.0;
    double bound = 0.0;   ///< C^{order/2} Vol^order
    bool holds = false;   ///< moment - 4 std_error <= bound
};

/// Monte-Carlo check of E|int B dmu|^l <= C^{l/2} Vol^l for l in {2, 4, 6}.
MomentBoundReport moment_bound_check(const Kernel& kernel, const GridSpec& grid, int order,
                                     std::uint64_t ensemble_size, std::uint64_t seed, unsigned workers = 1);

/// Binary field dump: "BFT1", u32 n, f64 L, lambda, C, kappa, u64 seed,
/// u64 realization_index, then n^3 f64 values; all little-endian.
void write_realization(std::ostream& out, const FieldRealization& realization);
FieldRealization read_realization(std::istream& in);

}  // namespace bft
