#pragma once

#include "bft/ensemble.hpp"
#include "bft/flows.hpp"
#include "bft/grf.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace bft {

/// Base flow and gating evaluated once for a set of sites and a time.
struct MixingContext {
    std::vector<FlowState> base;
    double amplitude = 0.0;       ///< a = beta psi S
    double amplitude_rate = 0.0;  ///< da/dt
    double time = 0.0;
};

MixingContext prepare_mixing(const TurbulenceModel& model, const std::vector<Vec3>& sites, double t);
MixingContext prepare_mixing(const TurbulenceModel& model, const FieldSource& source, double t);

/// U_i (1 + a B) and its exact derivatives at every site of one realization.
struct TurbulentSample {
    std::vector<Vec3> velocity;
    std::vector<Mat3> grad;       ///< grad(i, j) = d U_i / dx_j; empty unless requested
    std::vector<Vec3> dt;
    std::vector<Vec3> laplacian;  ///< empty unless requested
    double amplitude = 0.0;
};

/// Builds the turbulent sample. Requesting gradient or Laplacian outputs from
/// a realization that lacks the matching field data raises CapabilityError.
TurbulentSample mix(const MixingContext& ctx, const FieldRealization& field, Derivatives want = {});

TurbulentSample mix(const TurbulenceModel& model, const FieldRealization& field, double t, Derivatives want = {});

/// Ensemble size, seed and reduction settings shared by every Monte-Carlo
/// estimator. With antithetic set each ensemble member is the average of a
/// statistic over a draw and its sign-flipped partner (one draw per member).
struct EnsembleSpec {
    std::uint64_t size = 1000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    bool antithetic = false;
};

/// Per-entry Monte-Carlo mean with standard error next to a prediction.
struct Estimate {
    std::vector<double> mc;
    std::vector<double> std_error;
    std::vector<double> prediction;
    std::vector<double> paper_form;  ///< the printed closed form where it differs; else empty
    std::uint64_t count = 0;

    std::size_t size() const noexcept { return mc.size(); }
    /// (mc - prediction) / std_error; 0 for exact agreement with no noise,
    /// NaN where no prediction exists.
    double z(std::size_t i) const noexcept {
        const double d = mc[i] - prediction[i];
        if (std::isnan(d)) return d;
        if (std_error[i] == 0.0) return d == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d);
        return d / std_error[i];
    }
};

Estimate make_estimate(const FieldAccumulator& acc, std::vector<double> prediction);

/// Runs stat(realization, out) over the ensemble, where out has width
/// entries, and accumulates per-entry means in deterministic order.
template <class Stat>
FieldAccumulator sample_statistics(const FieldSource& source, std::size_t width, const EnsembleSpec& spec,
                                   Stat stat) {
    if (spec.size < 2) throw PreconditionError("ensemble: size must be >= 2");
    struct Scratch {
        std::vector<double> a, b;
    };
    return run_ensemble<FieldAccumulator>(
        spec.size, spec.workers, [width] { return FieldAccumulator(width); },
        [width] { return Scratch{std::vector<double>(width), std::vector<double>(width)}; },
        [&](Scratch& s, std::uint64_t r, FieldAccumulator& acc) {
            const FieldRealization field = source.draw(spec.seed, r);
            stat(field, s.a.data());
            if (spec.antithetic) {
                stat(field.negated(), s.b.data());
                for (std::size_t i = 0; i < width; ++i) s.a[i] = 0.5 * (s.a[i] + s.b[i]);
            }
            acc.add(s.a);
        });
}

/// E[U_turb] at every site of the source (3 entries per site); prediction U.
Estimate mean_velocity_mc(const TurbulenceModel& model, const FieldSource& source, double t,
                          const EnsembleSpec& spec);

/// E[div U_turb] per site; prediction div U.
Estimate mean_turbulent_divergence(const TurbulenceModel& model, const FieldSource& source, double t,
                                   const EnsembleSpec& spec);

/// E[d_i U_j - d_j U_i] per site as 9 row-major entries (i, j); prediction
/// is the base flow's antisymmetric gradient part.
Estimate isotropy_defect(const TurbulenceModel& model, const FieldSource& source, double t,
                         const EnsembleSpec& spec);

}  // namespace bft
