#include "bft/ns_check.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>

namespace bft {

namespace {

double max_abs(const Vec3& v) { return v.cwiseAbs().maxCoeff(); }

void resize_terms(ResidualField& r, std::size_t n) {
    for (auto* v : {&r.residual, &r.std_error, &r.dt, &r.viscous, &r.convective, &r.pressure, &r.excess,
                    &r.base_convective})
        v->assign(n, Vec3::Zero());
}

}  // namespace

double ResidualField::max_norm() const {
    double m = 0.0;
    for (const Vec3& v : residual) m = std::max(m, max_abs(v));
    return m;
}

double ResidualField::l2_norm() const {
    if (residual.empty()) return 0.0;
    double s = 0.0;
    for (const Vec3& v : residual) s += v.squaredNorm();
    return std::sqrt(s / static_cast<double>(residual.size()));
}

double ResidualField::decomposition_defect() const {
    double m = 0.0;
    for (std::size_t i = 0; i < residual.size(); ++i)
        m = std::max(m, max_abs(residual[i] - (dt[i] + viscous[i] + convective[i] + pressure[i] + excess[i])));
    return m;
}

ResidualField deterministic_ns_residual(const BaseFlow& flow, const std::vector<Vec3>& sites, double t,
                                        double pressure_sign) {
    ResidualField r;
    r.sites = sites;
    resize_terms(r, sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const FlowState s = eval_flow(flow, sites[i], t);
        r.dt[i] = s.dt;
        r.viscous[i] = -flow.viscosity * s.laplacian;
        r.convective[i] = s.convective();
        r.pressure[i] = pressure_sign * s.grad_pressure;
        r.base_convective[i] = r.convective[i];
        r.residual[i] = r.dt[i] + r.viscous[i] + r.convective[i] + r.pressure[i];
    }
    return r;
}

ResidualField deterministic_ns_residual(const BaseFlow& flow, const GridSpec& grid, double t) {
    grid.validate();
    std::vector<Vec3> sites(grid.site_count());
    for (std::size_t i = 0; i < sites.size(); ++i) sites[i] = grid.site(i);
    return deterministic_ns_residual(flow, sites, t);
}

Estimate averaged_convective_mc(const TurbulenceModel& model, const FieldSource& source, double t,
                                const EnsembleSpec& spec) {
    const MixingContext ctx = prepare_mixing(model, source, t);
    const std::size_t n = source.size();
    const auto acc = sample_statistics(source, 3 * n, spec, [&](const FieldRealization& f, double* out) {
        const auto s = mix(ctx, f, {.gradient = true});
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 c = s.grad[i] * s.velocity[i];
            for (int k = 0; k < 3; ++k) out[3 * i + k] = c(k);
        }
    });
    const double psi2 = model.boost(t).psi2;
    std::vector<double> pred(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) pred[3 * i + k] = psi2 * ctx.base[i].convective()(k);
    return make_estimate(acc, std::move(pred));
}

ResidualField averaged_ns_residual_mc(const TurbulenceModel& model, const FieldSource& source, double t,
                                      const EnsembleSpec& spec) {
    const MixingContext ctx = prepare_mixing(model, source, t);
    const std::size_t n = source.size();
    const double nu = model.flow.viscosity;
    // per site: dt, viscous, convective, total (3 each); pressure is deterministic
    constexpr std::size_t kWidth = 12;
    const auto acc = sample_statistics(source, kWidth * n, spec, [&](const FieldRealization& f, double* out) {
        const auto s = mix(ctx, f, {.gradient = true, .laplacian = true});
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 dt = s.dt[i];
            const Vec3 visc = -nu * s.laplacian[i];
            const Vec3 conv = s.grad[i] * s.velocity[i];
            const Vec3 total = dt + visc + conv + ctx.base[i].grad_pressure;
            double* o = out + kWidth * i;
            for (int k = 0; k < 3; ++k) {
                o[k] = dt(k);
                o[3 + k] = visc(k);
                o[6 + k] = conv(k);
                o[9 + k] = total(k);
            }
        }
    });

    ResidualField r;
    r.sites.resize(n);
    resize_terms(r, n);
    r.psi2 = model.boost(t).psi2;
    r.count = acc.count();
    const double psi1 = r.psi2 - 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const FlowState& u = ctx.base[i];
        r.sites[i] = source.site(i);
        r.base_convective[i] = u.convective();
        const Vec3 det = u.dt - nu * u.laplacian + u.convective() + u.grad_pressure;
        const std::size_t b = kWidth * i;
        for (int k = 0; k < 3; ++k) {
            r.dt[i](k) = acc.mean(b + k) - u.dt(k);
            r.viscous[i](k) = acc.mean(b + 3 + k) + nu * u.laplacian(k);
            r.convective[i](k) = acc.mean(b + 6 + k) - u.convective()(k);
            r.residual[i](k) = acc.mean(b + 9 + k) - det(k) - psi1 * u.convective()(k);
            r.std_error[i](k) = acc.std_error(b + 9 + k);
        }
        r.excess[i] = -psi1 * u.convective();
    }
    return r;
}

namespace {

double site_score(const Vec3& d, const Vec3& se) {
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
        double z = 0.0;
        if (se(k) > 0.0) z = std::abs(d(k)) / se(k);
        else if (d(k) != 0.0) z = std::numeric_limits<double>::infinity();
        worst = std::max(worst, z);
    }
    return worst;
}

SiteScores tally(const std::vector<Vec3>& reference, double fraction, double threshold, auto&& score) {
    double top = 0.0;
    for (const Vec3& v : reference) top = std::max(top, v.norm());
    SiteScores s;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        if (!(reference[i].norm() > fraction * top)) continue;
        const double z = score(i);
        ++s.high_signal;
        if (z < threshold) ++s.within;
        s.worst = std::max(s.worst, z);
    }
    return s;
}

}  // namespace

SiteScores score_sites(const ResidualField& field, std::optional<double> psi2_alt, double threshold,
                       double fraction) {
    return tally(field.base_convective, fraction, threshold, [&](std::size_t i) {
        const Vec3 d = psi2_alt ? field.residual_with_boost(i, *psi2_alt) : field.residual[i];
        return site_score(d, field.std_error[i]);
    });
}

SiteScores score_sites(const Estimate& e, const std::vector<Vec3>& reference, double threshold, double fraction) {
    return tally(reference, fraction, threshold, [&](std::size_t i) {
        Vec3 d, se;
        for (int k = 0; k < 3; ++k) {
            d(k) = e.mc[3 * i + k] - e.prediction[3 * i + k];
            se(k) = e.std_error[3 * i + k];
        }
        return site_score(d, se);
    });
}

std::vector<double> poisson_solve(const GridSpec& grid, const std::vector<double>& source) {
    grid.validate();
    if (source.size() != grid.site_count()) throw PreconditionError("poisson_solve: field size does not match grid");
    const SpectralOps ops(grid);
    ComplexArray spec = ops.fft().make_spectral();
    ops.to_spectral(source.data(), spec.data());
    ops.for_each_mode([&](std::size_t idx, int i, int j, int k) {
        const double k2 = ops.k_squared(i, j, k);
        spec[idx] = k2 > 0.0 ? spec[idx] / k2 : std::complex<double>(0.0);
    });
    std::vector<double> out(grid.site_count());
    ops.to_physical(spec.data(), out.data());
    return out;
}

namespace {

/// Spectrum of P with -Delta P = d_a d_b (U_a U_b). Diagonal second
/// derivatives keep the Nyquist planes; mixed ones use the first-derivative
/// multipliers.
ComplexArray pressure_spectrum(const SpectralOps& ops, const std::vector<Vec3>& u) {
    const Fft3d& fft = ops.fft();
    const std::size_t n = u.size();
    ComplexArray total = fft.make_spectral(), q = fft.make_spectral();
    for (std::size_t m = 0; m < fft.spectral_size(); ++m) total[m] = 0.0;
    RealArray prod = fft.make_real();
    for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
            bool any = false;
            for (std::size_t s = 0; s < n; ++s) {
                prod[s] = u[s](a) * u[s](b);
                any = any || prod[s] != 0.0;
            }
            if (!any) continue;
            ops.to_spectral(prod.data(), q.data());
            ops.for_each_mode([&](std::size_t idx, int i, int j, int k) {
                const int id[3] = {i, j, k};
                const double w = a == b ? ops.k(a, id[a]) * ops.k(a, id[a]) : 2.0 * ops.kd(a, id[a]) * ops.kd(b, id[b]);
                total[idx] -= w * q[idx];
            });
        }
    ops.for_each_mode([&](std::size_t idx, int i, int j, int k) {
        const double k2 = ops.k_squared(i, j, k);
        total[idx] = k2 > 0.0 ? total[idx] / k2 : std::complex<double>(0.0);
    });
    return total;
}

std::vector<Vec3> gradient_of_spectrum(const SpectralOps& ops, const ComplexArray& spec) {
    const std::size_t n = ops.grid().site_count();
    RealArray d = ops.fft().make_real();
    std::vector<Vec3> out(n);
    for (int a = 0; a < 3; ++a) {
        ops.derivative(spec.data(), a, d.data());
        for (std::size_t s = 0; s < n; ++s) out[s](a) = d[s];
    }
    return out;
}

}  // namespace

std::vector<double> pressure_poisson_solve(const GridVectorField& velocity) {
    if (!velocity.periodic) throw CapabilityError("pressure_poisson_solve: only periodic grid fields are supported");
    velocity.grid.validate();
    if (velocity.values.size() != velocity.grid.site_count()) {
        throw PreconditionError("pressure_poisson_solve: field size does not match grid");
    }
    const SpectralOps ops(velocity.grid);
    const ComplexArray spec = pressure_spectrum(ops, velocity.values);
    std::vector<double> out(velocity.grid.site_count());
    ops.to_physical(spec.data(), out.data());
    return out;
}

std::vector<Vec3> spectral_gradient(const GridSpec& grid, const std::vector<double>& field) {
    grid.validate();
    const SpectralOps ops(grid);
    ComplexArray spec = ops.fft().make_spectral();
    ops.to_spectral(field.data(), spec.data());
    return gradient_of_spectrum(ops, spec);
}

Estimate averaged_pressure_gradient_mc(const TurbulenceModel& model, const GridSpec& grid, double t,
                                       const EnsembleSpec& spec) {
    const auto sampler = std::make_shared<const SpectralSampler>(model.kernel, grid);
    const FieldSource src(sampler);
    const MixingContext ctx = prepare_mixing(model, src, t);
    const SpectralOps& ops = sampler->ops();
    const std::size_t n = grid.site_count();
    const auto acc = sample_statistics(src, 3 * n, spec, [&](const FieldRealization& f, double* out) {
        const auto s = mix(ctx, f);
        const auto g = gradient_of_spectrum(ops, pressure_spectrum(ops, s.velocity));
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) out[3 * i + k] = g[i](k);
    });
    std::vector<Vec3> base(n);
    for (std::size_t i = 0; i < n; ++i) base[i] = ctx.base[i].velocity;
    const auto g0 = gradient_of_spectrum(ops, pressure_spectrum(ops, base));
    const double psi2 = model.boost(t).psi2;
    std::vector<double> pred(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) pred[3 * i + k] = psi2 * g0[i](k);
    return make_estimate(acc, std::move(pred));
}

BoostEquivalenceReport boost_equivalence_check(const BaseFlow& flow, const std::vector<Vec3>& sites, double t,
                                               double xi, double xi_rate) {
    if (xi == 0.0) throw PreconditionError("boost_equivalence_check: xi must be nonzero");
    BoostEquivalenceReport r{xi, xi_rate, 0.0, 0.0};
    for (const Vec3& x : sites) {
        const FlowState s = eval_flow(flow, x, t);
        const Vec3 v = xi * s.velocity;
        const Mat3 grad_v = xi * s.grad;
        const Vec3 dv = xi_rate * s.velocity + xi * s.dt;  // d_t (xi U)
        const Vec3 boosted = dv - (xi_rate / xi) * v - flow.viscosity * xi * s.laplacian + grad_v * v +
                             xi * s.grad_pressure;
        const Vec3 direct = s.dt - flow.viscosity * s.laplacian + xi * s.convective() + s.grad_pressure;
        r.max_defect = std::max(r.max_defect, max_abs(boosted / xi - direct));
        r.scale = std::max(r.scale, max_abs(direct));
    }
    return r;
}

BoostEquivalenceReport boost_equivalence_check(const TurbulenceModel& model, const std::vector<Vec3>& sites,
                                               double t) {
    const double a = model.amplitude(t);
    const double xi = model.boost(t).psi2;
    const double rate = 2.0 * a * model.amplitude_rate(t) * model.kernel.amplitude;
    return boost_equivalence_check(model.flow, sites, t, xi, rate);
}

RijEvolutionReport rij_evolution_residual(const BaseFlow& flow, const std::vector<Vec3>& sites, double t) {
    RijEvolutionReport r;
    const double nu = flow.viscosity;
    for (const Vec3& x : sites) {
        const FlowState s = eval_flow(flow, x, t);
        const Vec3& u = s.velocity;
        const Mat3 dt = 0.5 * (s.dt * u.transpose() + u * s.dt.transpose());
        const Mat3 visc = -nu * (s.laplacian * u.transpose() + u * s.laplacian.transpose() +
                                 2.0 * s.grad * s.grad.transpose());
        // d_k (U_i U_j U_k) = U_j (U . grad) U_i + U_i (U . grad) U_j + U_i U_j div U
        const Vec3 c = s.convective();
        const Mat3 adv = c * u.transpose() + u * c.transpose() + u * u.transpose() * s.grad.trace();
        const Mat3 pres = s.grad_pressure * u.transpose();  // (i, j) = U_j d_i P
        const Mat3 total = dt + visc + adv + pres;
        const Vec3 ns = s.dt - nu * s.laplacian + c + s.grad_pressure;
        const Mat3 one_sided = ns * u.transpose();  // U_j (NS)_i
        r.tensor_defect = std::max(r.tensor_defect, total.cwiseAbs().maxCoeff());
        r.trace_defect = std::max(r.trace_defect, std::abs(total.trace()));
        r.unsymmetrized_defect = std::max(r.unsymmetrized_defect, one_sided.cwiseAbs().maxCoeff());
        const Mat3* terms[4] = {&dt, &visc, &adv, &pres};
        for (int k = 0; k < 4; ++k) r.term_scale[k] = std::max(r.term_scale[k], terms[k]->cwiseAbs().maxCoeff());
    }
    return r;
}

}  // namespace bft
