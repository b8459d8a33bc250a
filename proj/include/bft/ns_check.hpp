#pragma once

#include "bft/mixing.hpp"

#include <array>
#include <optional>
#include <vector>

namespace bft {

/// Sitewise momentum-equation residual with its term decomposition:
/// residual = dt + viscous + convective + pressure + excess at every site.
///
/// For ensemble residuals each term is the Monte-Carlo mean of that term
/// minus its base-flow value, and excess = -psi1 (U . grad) U, so a zero
/// residual means the averaged equation holds with the predicted boost.
struct ResidualField {
    std::vector<Vec3> sites;
    std::vector<Vec3> residual;
    std::vector<Vec3> std_error;  ///< zero for deterministic fields
    std::vector<Vec3> dt, viscous, convective, pressure, excess;
    std::vector<Vec3> base_convective;  ///< (U . grad) U of the base flow
    double psi2 = 1.0;                  ///< boost used for the excess term
    std::uint64_t count = 0;

    std::size_t size() const noexcept { return residual.size(); }
    double max_norm() const;
    /// Root-mean-square of |residual| over sites.
    double l2_norm() const;
    /// Largest |residual - sum of terms| (exact algebra, so round-off only).
    double decomposition_defect() const;
    /// Residual recomputed as if the prediction used boost psi2_alt.
    Vec3 residual_with_boost(std::size_t i, double psi2_alt) const {
        return residual[i] - (psi2_alt - psi2) * base_convective[i];
    }
};

/// dU/dt - nu Delta U + (U . grad) U + s grad P from the closed forms, with
/// s = pressure_sign (-1 gives a deliberately wrong equation).
ResidualField deterministic_ns_residual(const BaseFlow& flow, const std::vector<Vec3>& sites, double t,
                                        double pressure_sign = 1.0);
ResidualField deterministic_ns_residual(const BaseFlow& flow, const GridSpec& grid, double t);

/// E[(U . grad) U] of the mixed field, 3 entries per site; prediction
/// psi2 (U . grad) U. The source must carry gradients.
Estimate averaged_convective_mc(const TurbulenceModel& model, const FieldSource& source, double t,
                                const EnsembleSpec& spec);

/// E[dU/dt - nu Delta U + (U . grad) U + grad P] of the mixed field minus
/// the predicted [deterministic residual + psi1 (U . grad) U]. The source
/// must carry the gradient and Laplacian.
ResidualField averaged_ns_residual_mc(const TurbulenceModel& model, const FieldSource& source, double t,
                                      const EnsembleSpec& spec);

/// Tally of sitewise z-scores over the high-signal sites, where the
/// reference vector has norm above fraction * its maximum. A site's score
/// is the largest |z| over its components.
struct SiteScores {
    std::size_t high_signal = 0;
    std::size_t within = 0;  ///< sites with score < threshold
    double worst = 0.0;
    double fraction_within() const { return high_signal ? double(within) / double(high_signal) : 0.0; }
};

SiteScores score_sites(const ResidualField& field, std::optional<double> psi2_alt = std::nullopt,
                       double threshold = 4.0, double fraction = 0.1);
/// Same tally for a 3-per-site estimate against the given reference field.
SiteScores score_sites(const Estimate& estimate, const std::vector<Vec3>& reference, double threshold = 4.0,
                       double fraction = 0.1);

/// Periodic grid velocity field in storage order.
struct GridVectorField {
    GridSpec grid;
    std::vector<Vec3> values;
    bool periodic = true;
};

/// Solves -Delta p = f spectrally with zero mean (the mean of f is dropped).
std::vector<double> poisson_solve(const GridSpec& grid, const std::vector<double>& source);

/// Pressure of a velocity field: -Delta P = d_i d_j (U_i U_j), zero-mean gauge.
/// Non-periodic input raises CapabilityError.
std::vector<double> pressure_poisson_solve(const GridVectorField& velocity);

/// Spectral gradient of a grid scalar.
std::vector<Vec3> spectral_gradient(const GridSpec& grid, const std::vector<double>& field);

/// E[grad P] where each realization's pressure is the Poisson solution for
/// its own mixed velocity on the grid; prediction psi2 grad P with grad P
/// from the same solver applied to the base flow.
Estimate averaged_pressure_gradient_mc(const TurbulenceModel& model, const GridSpec& grid, double t,
                                       const EnsembleSpec& spec);

struct BoostEquivalenceReport {
    double xi = 1.0;
    double xi_rate = 0.0;
    double max_defect = 0.0;  ///< max |boosted / xi - direct| over sites and components
    double scale = 0.0;       ///< max |direct|, for context
};

/// Evaluates the boosted system with V = xi U, Q = xi P and D_t = d_t - xi'/xi,
/// divides by xi and compares with dU/dt - nu Delta U + xi (U . grad) U + grad P.
BoostEquivalenceReport boost_equivalence_check(const BaseFlow& flow, const std::vector<Vec3>& sites, double t,
                                               double xi, double xi_rate);
/// xi = psi2(t) of the model with its time derivative 2 a a' C.
BoostEquivalenceReport boost_equivalence_check(const TurbulenceModel& model, const std::vector<Vec3>& sites,
                                               double t);

/// The second-moment evolution T_ij = (1/2) d_t(U_i U_j) - nu Delta(U_i U_j)
/// + d_k(U_i U_j U_k) + U_j d_i P evaluated from closed forms.
struct RijEvolutionReport {
    double tensor_defect = 0.0;   ///< max |T_ij|
    double trace_defect = 0.0;    ///< max |T_ii|
    /// max |U_j (NS residual)_i|: the one-sided identity the evolution is
    /// built from; vanishes for any exact solution.
    double unsymmetrized_defect = 0.0;
    /// max over sites of each term's largest entry: dt, viscous, advective, pressure
    std::array<double, 4> term_scale{};
};

RijEvolutionReport rij_evolution_residual(const BaseFlow& flow, const std::vector<Vec3>& sites, double t);

}  // namespace bft
