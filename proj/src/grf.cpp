#include "bft/grf.hpp"

#include "bft/ensemble.hpp"
#include "bft/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace bft {

Vec3 FieldRealization::site(std::size_t i) const {
    if (const auto* pts = std::get_if<PointSet>(&locus)) return (**pts)[i];
    return std::get<GridSpec>(locus).site(i);
}

FieldRealization FieldRealization::negated() const {
    FieldRealization out = *this;
    for (auto& v : out.values) v = -v;
    for (auto& g : out.gradient) g = -g;
    for (auto& l : out.laplacian) l = -l;
    return out;
}

// ---------------------------------------------------------------------------
// Exact sampler

namespace {

// Per-point variable layout: B, then dB/dx_a (if gradient), then Laplacian B
// (if requested). Cross covariances are derivatives of Sigma(x, y) in the
// matching argument; Sigma depends on x - y, so d/dy = -d/dx.
Eigen::MatrixXd joint_covariance(const Kernel& kernel, const std::vector<Vec3>& pts, Derivatives d, int stride) {
    const auto n = static_cast<Eigen::Index>(pts.size());
    const int lap = d.gradient ? 4 : 1;
    Eigen::MatrixXd m(stride * n, stride * n);
    for (Eigen::Index p = 0; p < n; ++p) {
        for (Eigen::Index q = 0; q < n; ++q) {
            const Vec3& x = pts[p];
            const Vec3& y = pts[q];
            const Eigen::Index bp = stride * p, bq = stride * q;
            m(bp, bq) = p == q ? kernel.amplitude : eval_kernel(kernel, x, y);
            if (d.gradient) {
                const Vec3 g = p == q ? Vec3::Zero() : eval_kernel_grad(kernel, x, y);
                const Mat3 h = eval_kernel_cross_hessian(kernel, x, y);
                for (int a = 0; a < 3; ++a) {
                    m(bp + 1 + a, bq) = g(a);   // Cov(dB(x)/dx_a, B(y))
                    m(bp, bq + 1 + a) = -g(a);  // Cov(B(x), dB(y)/dy_a)
                    for (int b = 0; b < 3; ++b) m(bp + 1 + a, bq + 1 + b) = h(a, b);
                }
            }
            if (d.laplacian) {
                const double l = eval_kernel_laplacian(kernel, x, y);
                m(bp + lap, bq) = l;
                m(bp, bq + lap) = l;
                m(bp + lap, bq + lap) = eval_kernel_bilaplacian(kernel, x, y);
                if (d.gradient) {
                    const Vec3 lg = p == q ? Vec3::Zero() : eval_kernel_laplacian_grad(kernel, x, y);
                    for (int a = 0; a < 3; ++a) {
                        m(bp + 1 + a, bq + lap) = lg(a);   // Cov(dB(x)/dx_a, Lap B(y))
                        m(bp + lap, bq + 1 + a) = -lg(a);  // Cov(Lap B(x), dB(y)/dy_a)
                    }
                }
            }
        }
    }
    return m;
}

}  // namespace

ExactSampler::ExactSampler(const Kernel& kernel, std::vector<Vec3> points, Derivatives derivatives)
    : kernel_(kernel), derivatives_(derivatives) {
    kernel_.validate();
    const bool joint = derivatives_.gradient || derivatives_.laplacian;
    if (joint && !kernel_.is_differentiable()) {
        throw DifferentiabilityError("ExactSampler: derivative sampling requires kernel exponent 2");
    }
    stride_ = 1 + (derivatives_.gradient ? 3 : 0) + (derivatives_.laplacian ? 1 : 0);
    if (joint) {
        for (const auto& p : points) {
            if (!p.allFinite()) throw PreconditionError("ExactSampler: non-finite point coordinate");
        }
        if (points.empty()) throw PreconditionError("ExactSampler: point set is empty");
        covariance_ = joint_covariance(kernel_, points, derivatives_, stride_);
    } else {
        covariance_ = kernel_matrix(kernel_, points).entries;
    }
    points_ = std::make_shared<const std::vector<Vec3>>(std::move(points));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance_);
    Eigen::VectorXd lambda = eig.eigenvalues();
    const double scale = covariance_.diagonal().maxCoeff();
    const double budget = kPsdJitter * scale;
    if (lambda(0) < -budget) {
        throw ConditioningError("ExactSampler: covariance eigenvalue " + std::to_string(lambda(0)) +
                                " below jitter budget");
    }
    if (joint && lambda(0) < 0.0) {
        jitter_ = budget;
        lambda.array() += budget;
        covariance_.diagonal().array() += budget;
    }
    factor_ = eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

FieldRealization ExactSampler::draw(std::uint64_t seed, std::uint64_t realization_index) const {
    const Eigen::Index dim = factor_.rows();
    Eigen::VectorXd z(dim);
    NormalStream(seed, realization_index, StreamTag::ExactSites).fill(0, static_cast<std::size_t>(dim), z.data());
    const Eigen::VectorXd y = factor_ * z;

    FieldRealization out;
    out.locus = points_;
    out.kernel = kernel_;
    out.seed = seed;
    out.realization_index = realization_index;
    const std::size_t n = points_->size();
    out.values.resize(n);
    if (derivatives_.gradient) out.gradient.resize(n);
    if (derivatives_.laplacian) out.laplacian.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
        const auto base = static_cast<Eigen::Index>(stride_ * p);
        out.values[p] = y(base);
        if (derivatives_.gradient) out.gradient[p] = Vec3(y(base + 1), y(base + 2), y(base + 3));
        if (derivatives_.laplacian) out.laplacian[p] = y(base + stride_ - 1);
    }
    return out;
}

std::vector<FieldRealization> sample_exact(const Kernel& kernel, std::span<const Vec3> points, std::uint64_t seed,
                                           std::uint64_t count) {
    if (count < 1) throw PreconditionError("sample_exact: count must be >= 1");
    const ExactSampler sampler(kernel, std::vector<Vec3>(points.begin(), points.end()));
    std::vector<FieldRealization> out;
    out.reserve(count);
    for (std::uint64_t r = 0; r < count; ++r) out.push_back(sampler.draw(seed, r));
    return out;
}

// ---------------------------------------------------------------------------
// Spectral grid sampler

void check_spectral_contract(const Kernel& kernel, const GridSpec& grid, bool derivatives) {
    kernel.validate();
    grid.validate();
    if (!kernel.is_differentiable()) {
        throw DifferentiabilityError("spectral sampler: only the exponent-2 kernel has a closed-form spectrum");
    }
    if (kernel.corr_length > grid.side_length / 8.0) {
        throw AccuracyContractError("spectral sampler: lambda = " + std::to_string(kernel.corr_length) +
                                    " exceeds L/8 = " + std::to_string(grid.side_length / 8.0));
    }
    if (derivatives && grid.spacing() > kernel.corr_length / 3.0) {
        throw AccuracyContractError("spectral sampler: derivative fields need h <= lambda/3 (h = " +
                                    std::to_string(grid.spacing()) + ")");
    }
}

namespace {

/// sum_j exp(-lambda^2 (k + j K)^2 / 4) over alias images, K = 2 pi / h.
double folded_axis_spectrum(double k, double lambda, double alias_period) {
    double total = std::exp(-0.25 * lambda * lambda * k * k);
    for (int j = 1; j < 100000; ++j) {
        const double plus = std::exp(-0.25 * lambda * lambda * (k + j * alias_period) * (k + j * alias_period));
        const double minus = std::exp(-0.25 * lambda * lambda * (k - j * alias_period) * (k - j * alias_period));
        total += plus + minus;
        if (plus + minus < 1e-18 * total) break;
    }
    return total;
}

}  // namespace

SpectralSampler::SpectralSampler(const Kernel& kernel, const GridSpec& grid, Derivatives options)
    : kernel_(kernel), options_(options), ops_((check_spectral_contract(kernel, grid, options.gradient || options.laplacian), grid)) {
    const int n = grid.resolution;
    const double alias_period = 2.0 * kPi / grid.spacing();
    axis_spectrum_.resize(n);
    for (int m = 0; m < n; ++m) {
        axis_spectrum_[m] = folded_axis_spectrum(grid.wavenumber(m), kernel.corr_length, alias_period);
    }
    const double l = kernel.corr_length;
    const double prefactor = kernel.amplitude * std::pow(kPi, 1.5) * l * l * l / grid.volume() /
                             static_cast<double>(grid.site_count());
    amplitude_.resize(ops_.fft().spectral_size());
    ops_.for_each_mode([&](std::size_t idx, int i, int j, int k) {
        amplitude_[idx] = std::sqrt(prefactor * axis_spectrum_[i] * axis_spectrum_[j] * axis_spectrum_[k]);
    });
}

FieldRealization SpectralSampler::draw(std::uint64_t seed, std::uint64_t realization_index) const {
    const Fft3d& fft = ops_.fft();
    const std::size_t sites = fft.real_size();

    RealArray noise = fft.make_real();
    NormalStream(seed, realization_index, StreamTag::GridNoise).fill(0, sites, noise.data());
    ComplexArray spectrum = fft.make_spectral();
    fft.forward(noise.data(), spectrum.data());
    for (std::size_t i = 0; i < spectrum.size(); ++i) spectrum[i] *= amplitude_[i];

    FieldRealization out;
    out.locus = ops_.grid();
    out.kernel = kernel_;
    out.seed = seed;
    out.realization_index = realization_index;

    RealArray buffer = fft.make_real();
    ops_.to_physical(spectrum.data(), buffer.data());
    out.values.assign(buffer.data(), buffer.data() + sites);

    if (options_.gradient) {
        out.gradient.assign(sites, Vec3::Zero());
        for (int a = 0; a < 3; ++a) {
            ops_.derivative(spectrum.data(), a, buffer.data());
            for (std::size_t s = 0; s < sites; ++s) out.gradient[s](a) = buffer[s];
        }
    }
    if (options_.laplacian) {
        ops_.laplacian(spectrum.data(), buffer.data());
        out.laplacian.assign(buffer.data(), buffer.data() + sites);
    }
    return out;
}

double SpectralSampler::model_covariance(const std::array<int, 3>& lag) const {
    const int n = grid().resolution;
    const double l = kernel_.corr_length;
    double product = kernel_.amplitude * std::pow(kPi, 1.5) * l * l * l / grid().volume();
    for (int a = 0; a < 3; ++a) {
        double sum = 0.0;
        for (int m = 0; m < n; ++m) {
            sum += axis_spectrum_[m] * std::cos(2.0 * kPi * grid().signed_mode(m) * lag[a] / n);
        }
        product *= sum;
    }
    return product;
}

double SpectralSampler::model_gradient_variance() const {
    const int n = grid().resolution;
    const double l = kernel_.corr_length;
    double plain = 0.0, weighted = 0.0;
    for (int m = 0; m < n; ++m) {
        const double kd = (m == n / 2) ? 0.0 : grid().wavenumber(m);
        plain += axis_spectrum_[m];
        weighted += kd * kd * axis_spectrum_[m];
    }
    return kernel_.amplitude * std::pow(kPi, 1.5) * l * l * l / grid().volume() * weighted * plain * plain;
}

FieldRealization sample_grid_spectral(const Kernel& kernel, const GridSpec& grid, std::uint64_t seed,
                                      std::uint64_t realization_index, bool with_gradient) {
    return SpectralSampler(kernel, grid, Derivatives{.gradient = with_gradient})
        .draw(seed, realization_index);
}

// ---------------------------------------------------------------------------
// Series sampler

FieldRealization sample_series(const Kernel& kernel, std::span<const Vec3> points, int n_max, std::uint64_t seed,
                               std::uint64_t realization_index, const Vec3& origin) {
    kernel.validate();
    if (!kernel.is_differentiable()) {
        throw DifferentiabilityError("sample_series: the entire-function series exists only for exponent 2");
    }
    if (n_max < 0) throw PreconditionError("sample_series: truncation order must be >= 0");
    const double l = kernel.corr_length;
    const double radius = l * std::sqrt(static_cast<double>(n_max)) / 2.0;
    for (const auto& p : points) {
        if ((p - origin).norm() > radius) {
            throw TruncationError("sample_series: point at distance " + std::to_string((p - origin).norm()) +
                                  " outside accuracy radius " + std::to_string(radius));
        }
    }

    const int terms = n_max + 1;
    std::vector<double> alpha(static_cast<std::size_t>(terms) * terms * terms);
    NormalStream(seed, realization_index, StreamTag::SeriesCoefficients).fill(0, alpha.size(), alpha.data());

    FieldRealization out;
    out.locus = std::make_shared<const std::vector<Vec3>>(points.begin(), points.end());
    out.kernel = kernel;
    out.seed = seed;
    out.realization_index = realization_index;
    out.values.resize(points.size());

    std::array<std::vector<double>, 3> basis;
    for (auto& b : basis) b.resize(terms);
    for (std::size_t p = 0; p < points.size(); ++p) {
        const Vec3 x = points[p] - origin;
        for (int a = 0; a < 3; ++a) {
            const double z = std::sqrt(2.0) * x(a) / l;
            basis[a][0] = 1.0;
            for (int i = 1; i < terms; ++i) basis[a][i] = basis[a][i - 1] * z / std::sqrt(static_cast<double>(i));
        }
        double sum = 0.0;
        std::size_t idx = 0;
        for (int i = 0; i < terms; ++i)
            for (int j = 0; j < terms; ++j) {
                const double bij = basis[0][i] * basis[1][j];
                for (int k = 0; k < terms; ++k) sum += alpha[idx++] * bij * basis[2][k];
            }
        out.values[p] = std::sqrt(kernel.amplitude) * std::exp(-x.squaredNorm() / (l * l)) * sum;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stochastic integration

double integrate_field(const FieldRealization& realization, const GridSpec& grid) {
    const auto* g = std::get_if<GridSpec>(&realization.locus);
    if (!g || !(*g == grid)) throw CapabilityError("integrate_field: realization was not sampled on this grid");
    double sum = 0.0;
    for (double v : realization.values) sum += v;
    return sum * grid.cell_volume();
}

double integral_variance_quadrature(const Kernel& kernel, const GridSpec& grid) {
    kernel.validate();
    grid.validate();
    const int n = grid.resolution;
    const double h = grid.spacing();
    // The inner integral over y is the same for every x on the periodic cell.
    double inner = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const Vec3 d(grid.signed_mode(i) * h, grid.signed_mode(j) * h, grid.signed_mode(k) * h);
                inner += eval_kernel(kernel, d, Vec3::Zero());
            }
    return grid.volume() * inner * grid.cell_volume();
}

MomentBoundReport moment_bound_check(const Kernel& kernel, const GridSpec& grid, int order,
                                     std::uint64_t ensemble_size, std::uint64_t seed, unsigned workers) {
    if (order != 2 && order != 4 && order != 6) {
        throw PreconditionError("moment_bound_check: order must be 2, 4 or 6 (odd moments vanish)");
    }
    if (ensemble_size < 2) throw PreconditionError("moment_bound_check: ensemble must have >= 2 members");
    const SpectralSampler sampler(kernel, grid);
    const auto stats = run_ensemble<RunningStats>(ensemble_size, workers, [] { return RunningStats{}; },
                                                  [&](std::uint64_t r, RunningStats& acc) {
                                                      const double integral =
                                                          integrate_field(sampler.draw(seed, r), grid);
                                                      acc.add(std::pow(std::abs(integral), order));
                                                  });
    MomentBoundReport report;
    report.order = order;
    report.moment = stats.mean();
    report.std_error = stats.std_error();
    report.bound = std::pow(kernel.amplitude, order / 2.0) * std::pow(grid.volume(), order);
    report.holds = report.moment - 4.0 * report.std_error <= report.bound;
    return report;
}

// ---------------------------------------------------------------------------
// Binary dump

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_bytes(std::istream& in, int count) {
    unsigned char b[8] = {};
    if (!in.read(reinterpret_cast<char*>(b), count)) throw Error("read_realization: truncated stream");
    std::uint64_t v = 0;
    for (int i = count - 1; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_bytes(in, 8)); }

}  // namespace

void write_realization(std::ostream& out, const FieldRealization& realization) {
    const auto* grid = std::get_if<GridSpec>(&realization.locus);
    if (!grid) throw CapabilityError("write_realization: only grid realizations can be dumped");
    out.write("BFT1", 4);
    put_u32(out, static_cast<std::uint32_t>(grid->resolution));
    put_f64(out, grid->side_length);
    put_f64(out, realization.kernel.corr_length);
    put_f64(out, realization.kernel.amplitude);
    put_f64(out, realization.kernel.exponent);
    put_u64(out, realization.seed);
    put_u64(out, realization.realization_index);
    for (double v : realization.values) put_f64(out, v);
}

FieldRealization read_realization(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "BFT1", 4) != 0) throw Error("read_realization: bad magic");
    GridSpec grid;
    grid.resolution = static_cast<int>(get_bytes(in, 4));
    grid.side_length = get_f64(in);
    grid.validate();
    FieldRealization r;
    r.kernel.corr_length = get_f64(in);
    r.kernel.amplitude = get_f64(in);
    r.kernel.exponent = get_f64(in);
    r.seed = get_bytes(in, 8);
    r.realization_index = get_bytes(in, 8);
    r.locus = grid;
    r.values.resize(grid.site_count());
    for (auto& v : r.values) v = get_f64(in);
    return r;
}

}  // namespace bft
