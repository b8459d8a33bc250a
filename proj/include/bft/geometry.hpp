#pragma once

#include "bft/mixing.hpp"
#include "bft/ns_check.hpp"

#include <complex>
#include <variant>
#include <vector>

namespace bft {

/// Polyline with midpoint quadrature: segment s runs from node s to node
/// s + 1 (closed curves add the last-to-first segment); the line integral of
/// a field F is sum F(midpoint_s) . tangent_s.
class Curve {
public:
    Curve(std::vector<Vec3> nodes, bool closed);

    const std::vector<Vec3>& nodes() const noexcept { return nodes_; }
    bool closed() const noexcept { return closed_; }
    std::size_t segment_count() const noexcept { return midpoints_.size(); }
    const std::vector<Vec3>& midpoints() const noexcept { return midpoints_; }
    /// Segment vectors (node s+1 - node s).
    const std::vector<Vec3>& tangents() const noexcept { return tangents_; }

    /// Counter-clockwise square in the plane z = center.z, seen from +z.
    static Curve square(const Vec3& center, double side, int segments_per_side);
    /// Counter-clockwise circle in the plane z = center.z.
    static Curve circle(const Vec3& center, double radius, int segments);
    static Curve segment(const Vec3& from, const Vec3& to, int segments);

private:
    std::vector<Vec3> nodes_;
    bool closed_;
    std::vector<Vec3> midpoints_, tangents_;
};

/// Midpoint-rule circulation of the base flow along the curve.
double circulation(const BaseFlow& flow, const Curve& curve, double t);

struct CirculationEstimate {
    double mean = 0.0, std_error = 0.0, prediction = 0.0;
    double variance = 0.0, variance_std_error = 0.0, variance_prediction = 0.0;
    std::uint64_t count = 0;
};

/// a^2 sum_s sum_r (U_s . dx_s)(U_r . dx_r) Sigma(m_s, m_r) over segment midpoints.
double circulation_variance_quadrature(const TurbulenceModel& model, const Curve& curve, double t);

/// Ensemble of line integrals of the mixed field, sampled exactly at the
/// segment midpoints; prediction is the base circulation.
CirculationEstimate stochastic_circulation_mc(const TurbulenceModel& model, const Curve& curve, double t,
                                              const EnsembleSpec& spec);

/// omega = curl U from the closed-form gradient.
Vec3 vorticity(const BaseFlow& flow, const Vec3& x, double t);

/// E[curl U_turb] per site (3 entries per site) from field gradients;
/// prediction the base vorticity.
Estimate mean_vorticity_mc(const TurbulenceModel& model, const FieldSource& source, double t,
                           const EnsembleSpec& spec);

/// E[W_i(x) W_j(y)] for W = curl U_turb = omega (1 + a B) + a grad B x U:
///   w_i(x) w_j(y) (1 + a^2 S) - a^2 w_i(x) (G x V)_j + a^2 (G x U)_i w_j(y)
///   + a^2 eps_ilm eps_jpq H_lp U_m V_q
/// with S, G, H the kernel, its gradient and cross Hessian at (x, y).
Mat3 vorticity_correlation_closed(const TurbulenceModel& model, const Vec3& x, const Vec3& y, double t);

/// Row-major 9 entries from the exact joint sampler with gradients.
Estimate vorticity_correlation_mc(const TurbulenceModel& model, const Vec3& x, const Vec3& y, double t,
                                  const EnsembleSpec& spec);

/// Nested midpoint quadrature of int int U_i(x) U_j(y) [1 + a^2 Sigma(x, y)] dx^i dy^j.
double vortex_tangle_closed(const TurbulenceModel& model, const Curve& c1, const Curve& c2, double t);
/// Ensemble mean of the product of the two stochastic circulations (one
/// joint draw over both curves); prediction vortex_tangle_closed.
Estimate vortex_tangle_mc(const TurbulenceModel& model, const Curve& c1, const Curve& c2, double t,
                          const EnsembleSpec& spec);

/// Triple nested quadrature with the three pairwise kernel terms at a^2.
double triple_tangle_closed(const TurbulenceModel& model, const Curve& c1, const Curve& c2, const Curve& c3,
                            double t);
Estimate triple_tangle_mc(const TurbulenceModel& model, const Curve& c1, const Curve& c2, const Curve& c3, double t,
                          const EnsembleSpec& spec);

/// Spectral curl of a periodic grid field.
GridVectorField spectral_curl(const GridVectorField& field);

/// Zero-mean velocity with curl equal to the given vorticity, from
/// -Delta U = curl omega. Raises ConsistencyError when max |div omega|
/// exceeds tolerance times max |omega| times the largest grid wavenumber.
GridVectorField biot_savart_reconstruct(const GridVectorField& vorticity, double tolerance = 1e-8);

struct ConstantFn {
    double value = 1.0;
};
struct GaussianBumpFn {
    Vec3 center = Vec3::Zero();
    double width = 1.0;
    double height = 1.0;
};
/// c0 + l . x + x^T Q x
struct PolynomialFn {
    double c0 = 0.0;
    Vec3 linear = Vec3::Zero();
    Mat3 quadratic = Mat3::Zero();
};
using TestFunction = std::variant<ConstantFn, GaussianBumpFn, PolynomialFn>;

double eval_test_function(const TestFunction& f, const Vec3& x, double t);

struct HopfEstimate {
    std::complex<double> mc;
    double std_error_re = 0.0, std_error_im = 0.0;
    std::complex<double> closed_form;
    std::uint64_t count = 0;
    /// Larger of the real- and imaginary-part z-scores.
    double z() const;
};

/// E exp(i int f U_turb . dx) against exp(i mu - sigma^2 / 2) with
/// mu = int f U . dx and sigma^2 = a^2 int int f f (U . dx)(U . dy) Sigma.
HopfEstimate hopf_functional(const TurbulenceModel& model, const Curve& curve, const TestFunction& f, double t,
                             const EnsembleSpec& spec);
std::complex<double> hopf_closed_form(const TurbulenceModel& model, const Curve& curve, const TestFunction& f,
                                      double t);

}  // namespace bft
