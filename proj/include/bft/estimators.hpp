#pragma once

#include "bft/mixing.hpp"

#include <array>
#include <vector>

namespace bft {

/// Closed-form two-point second moment E[U_i(x) U_j(y)] of the mixed field,
/// U_i(x) U_j(y) (1 + a^2 Sigma(x, y)), as a 3x3 matrix.
Mat3 binary_correlation_closed(const TurbulenceModel& model, const Vec3& x, const Vec3& y, double t);

/// Three-point moment, 27 entries with index (i*3 + j)*3 + k. The Gaussian
/// form carries a^2 on each pair term; the printed form carries a^2 psi.
std::vector<double> triple_correlation_closed(const TurbulenceModel& model, const Vec3& x, const Vec3& y,
                                              const Vec3& z, double t);
std::vector<double> triple_correlation_printed(const TurbulenceModel& model, const Vec3& x, const Vec3& y,
                                             const Vec3& z, double t);

/// E[U_i(x) U_j(y)] row-major (9 entries) by sampling the exact joint law at
/// the distinct points among {x, y}.
Estimate binary_correlation_mc(const TurbulenceModel& model, const Vec3& x, const Vec3& y, double t,
                               const EnsembleSpec& spec);

/// E[U_i(x) U_j(y) U_k(z)], 27 entries; paper_form holds the printed form.
Estimate triple_correlation_mc(const TurbulenceModel& model, const Vec3& x, const Vec3& y, const Vec3& z, double t,
                               const EnsembleSpec& spec);

/// sum over even M of binom(N, M) a^M C^{M/2} (M-1)!!, i.e. E[(1 + a B)^N].
double gaussian_moment_factor(int n, double a, double c);
/// The printed weights: sum over M of binom(N, M) a^M (C^{M/2} + (-1)^M C^{M/2}) / 2.
double printed_moment_factor(int n, double a, double c);

/// E[U_i^N] per component (3 entries per site). Signed, so odd orders test
/// the zero-mean increment; for even N this is E|U_i|^N. prediction is
/// U_i^N times gaussian_moment_factor, paper_form U_i^N times
/// printed_moment_factor. N must lie in [1, 8].
Estimate nth_moment_mc(const TurbulenceModel& model, const std::vector<Vec3>& sites, double t, int order,
                       const EnsembleSpec& spec);

/// E sum_i |U_i(x + l) - U_i(x)|^p for p in [2, 6]. For even p the
/// prediction is the Gaussian moment of each increment component; odd p has
/// no prediction (NaN).
Estimate structure_function_mc(const TurbulenceModel& model, const Vec3& x, const Vec3& ell, double t, int p,
                               const EnsembleSpec& spec);

/// Deterministic energy (1/2) sum |U|^2 h^3 on the grid.
double energy_integral(const BaseFlow& flow, const GridSpec& grid, double t);
/// Deterministic sum |grad U|^2 h^3 on the grid (Frobenius norm).
double enstrophy_integral(const BaseFlow& flow, const GridSpec& grid, double t);

/// (1/2) int E|U|^2 on the grid from spectral draws; prediction
/// (1 + a^2 C) energy_integral, paper_form (1 + a^2 C / 2) energy_integral.
Estimate energy_integral_mc(const TurbulenceModel& model, const GridSpec& grid, double t, const EnsembleSpec& spec);

/// int E|grad U|^2 on the grid; prediction sum h^3 [|grad U|^2 (1 + a^2 C) +
/// a^2 |U|^2 tr H] where H is the kernel cross Hessian at coincident points.
Estimate enstrophy_integral_mc(const TurbulenceModel& model, const GridSpec& grid, double t,
                               const EnsembleSpec& spec);

/// Same statistic as a weighted point quadrature, sampled exactly at the
/// points; works for any correlation length.
Estimate enstrophy_integral_mc(const TurbulenceModel& model, const std::vector<Vec3>& points,
                               const std::vector<double>& weights, double t, const EnsembleSpec& spec);

/// One-point tensor R_ij(x) = U_i U_j (1 + a^2 C) with closed-form derivatives.
struct ReynoldsTensorPoint {
    Mat3 value = Mat3::Zero();
    std::array<Mat3, 3> grad{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};  ///< grad[k](i, j) = d_k R_ij
    Mat3 laplacian = Mat3::Zero();
    Mat3 dt = Mat3::Zero();  ///< includes 2 a (da/dt) C U_i U_j

    /// d_j R_ij summed over j.
    Vec3 divergence() const {
        Vec3 d = Vec3::Zero();
        for (int j = 0; j < 3; ++j) d += grad[j].col(j);
        return d;
    }
};

ReynoldsTensorPoint reynolds_tensor(const TurbulenceModel& model, const Vec3& x, double t);

/// Decay of the two-point turbulent excess. Each ensemble member gives
/// s_r = (U_i(x) U_j(y_r) - U_i U_j) / (U_i U_j a^2 C) at |y_r - x| = r for
/// r = lambda and 2 lambda along the unit direction; E s_r = exp(-r^2/lambda^2).
struct DecayRatio {
    double log_ratio = 0.0;  ///< ln(E s_2lambda / E s_lambda) from the ensemble
    double std_error = 0.0;  ///< delta-method error of log_ratio
    double prediction = -3.0;
    double z() const { return (log_ratio - prediction) / std_error; }
};

DecayRatio excess_decay_mc(const TurbulenceModel& model, const Vec3& x, const Vec3& direction, int i, int j,
                           double t, const EnsembleSpec& spec);

}  // namespace bft
