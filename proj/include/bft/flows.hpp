#pragma once

#include "bft/core.hpp"
#include "bft/grid.hpp"
#include "bft/kernels.hpp"

#include <optional>
#include <variant>
#include <vector>

namespace bft {

struct UniformFlow {
    Vec3 velocity = Vec3(0, 0, 1);
};

/// Decaying 2-D Taylor-Green vortex, an exact incompressible NS solution:
/// U = (A sin kx cos ky, -A cos kx sin ky, 0) F, P = (A^2/4)(cos 2kx + cos 2ky) F^2,
/// F = exp(-2 nu k^2 t).
struct TaylorGreenFlow {
    double amplitude = 1.0;
    double wavenumber = 1.0;
};

struct BaseFlow {
    std::variant<UniformFlow, TaylorGreenFlow> kind;
    double viscosity = 0.01;

    bool is_uniform() const noexcept { return std::holds_alternative<UniformFlow>(kind); }
};

/// Closed-form base-flow fields at one point. grad(i, j) = dU_i/dx_j.
struct FlowState {
    Vec3 velocity = Vec3::Zero();
    Mat3 grad = Mat3::Zero();
    Vec3 laplacian = Vec3::Zero();
    Vec3 dt = Vec3::Zero();
    double pressure = 0.0;
    Vec3 grad_pressure = Vec3::Zero();

    /// (U . grad) U
    Vec3 convective() const { return grad * velocity; }
};

FlowState eval_flow(const BaseFlow& flow, const Vec3& x, double t);

/// Flow states at every site, in the given order.
std::vector<FlowState> eval_flow(const BaseFlow& flow, const std::vector<Vec3>& sites, double t);

/// |(1/Vol) int U| L / nu with the midpoint rule on the grid.
double volume_avg_reynolds(const BaseFlow& flow, const GridSpec& grid, double t);

/// d/dt of volume_avg_reynolds (0 where the mean velocity vanishes).
double volume_avg_reynolds_rate(const BaseFlow& flow, const GridSpec& grid, double t);

enum class PsiForm { PowerLaw, Exponential, Sqrt };

struct PsiSpec {
    PsiForm form = PsiForm::PowerLaw;
    double alpha = 1.0;
    double exponent = 1.0;  ///< power-law exponent
};

/// Mixing strength beta, gating functional psi and critical Reynolds number.
struct MixingConfig {
    double beta = 1.0;
    PsiSpec psi;
    double re_c = 1.0;
    std::optional<double> re_override;  ///< prescribed control Re (else computed)
    std::optional<double> psi_cap;      ///< optional upper clamp on psi

    void validate() const;
};

/// 1 for Re > Re_c, else 0.
double switch_function(const MixingConfig& config, double re);

/// psi(Re) times the switch: PowerLaw alpha |dRe|^kappa, Exponential
/// exp(alpha |dRe|) - 1, Sqrt |dRe|^(1/2), with dRe = Re - Re_c.
double psi(const MixingConfig& config, double re);

/// d psi / d Re (one-sided above Re_c; 0 where switched off or capped).
double psi_derivative(const MixingConfig& config, double re);

struct BoostFactors {
    double psi1 = 0.0;  ///< beta^2 psi^2 C
    double psi2 = 1.0;  ///< 1 + psi1
};

BoostFactors boost_factors(const MixingConfig& config, const Kernel& kernel, double re);

/// Everything the mixing ansatz needs: base flow, gating, kernel and the
/// domain over which the Reynolds number is averaged.
struct TurbulenceModel {
    BaseFlow flow;
    MixingConfig mixing;
    Kernel kernel;
    GridSpec domain;

    void validate() const;
    /// Prescribed Re if set, otherwise the volume average over the domain.
    double reynolds(double t) const;
    double reynolds_rate(double t) const;
    /// Amplitude a = beta psi S of the random increment U a B.
    double amplitude(double t) const;
    /// da/dt through the chain rule on Re(t).
    double amplitude_rate(double t) const;
    BoostFactors boost(double t) const { return boost_factors(mixing, kernel, reynolds(t)); }
};

}  // namespace bft
