#include "bft/estimators.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace bft {

namespace {

/// Distinct points of a small list and, per input, the index of its copy.
struct SiteSet {
    std::vector<Vec3> points;
    std::vector<std::size_t> index;
};

SiteSet distinct(std::initializer_list<Vec3> pts) {
    SiteSet s;
    for (const Vec3& p : pts) {
        std::size_t k = 0;
        while (k < s.points.size() && s.points[k] != p) ++k;
        if (k == s.points.size()) s.points.push_back(p);
        s.index.push_back(k);
    }
    return s;
}

FieldSource exact_source(const Kernel& kernel, std::vector<Vec3> points, Derivatives d = {}) {
    return FieldSource(std::make_shared<const ExactSampler>(kernel, std::move(points), d));
}

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

double double_factorial(int m) {
    double r = 1.0;
    for (int i = m; i > 1; i -= 2) r *= i;
    return r;
}

/// E[(m + sqrt(v) Z)^p] for integer p >= 0.
double shifted_gaussian_moment(double m, double v, int p) {
    double s = 0.0;
    for (int k = 0; k <= p; k += 2) s += binomial(p, k) * std::pow(m, p - k) * std::pow(v, k / 2) * double_factorial(k - 1);
    return s;
}

std::vector<double> triple_form(const TurbulenceModel& model, const Vec3& x, const Vec3& y, const Vec3& z, double t,
                                double coefficient) {
    const Vec3 u = eval_flow(model.flow, x, t).velocity;
    const Vec3 v = eval_flow(model.flow, y, t).velocity;
    const Vec3 w = eval_flow(model.flow, z, t).velocity;
    const double pairs = eval_kernel(model.kernel, x, y) + eval_kernel(model.kernel, x, z) +
                         eval_kernel(model.kernel, y, z);
    const double factor = 1.0 + coefficient * pairs / model.kernel.amplitude;
    std::vector<double> out(27);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) out[(i * 3 + j) * 3 + k] = u(i) * v(j) * w(k) * factor;
    return out;
}

}  // namespace

Mat3 binary_correlation_closed(const TurbulenceModel& model, const Vec3& x, const Vec3& y, double t) {
    const double a = model.amplitude(t);
    const Vec3 u = eval_flow(model.flow, x, t).velocity;
    const Vec3 v = eval_flow(model.flow, y, t).velocity;
    return u * v.transpose() * (1.0 + a * a * eval_kernel(model.kernel, x, y));
}

std::vector<double> triple_correlation_closed(const TurbulenceModel& model, const Vec3& x, const Vec3& y,
                                              const Vec3& z, double t) {
    const double a = model.amplitude(t);
    return triple_form(model, x, y, z, t, a * a * model.kernel.amplitude);
}

std::vector<double> triple_correlation_printed(const TurbulenceModel& model, const Vec3& x, const Vec3& y,
                                             const Vec3& z, double t) {
    const double p = psi(model.mixing, model.reynolds(t));
    const double b = model.mixing.beta;
    return triple_form(model, x, y, z, t, b * b * p * p * p * model.kernel.amplitude);
}

Estimate binary_correlation_mc(const TurbulenceModel& model, const Vec3& x, const Vec3& y, double t,
                               const EnsembleSpec& spec) {
    const SiteSet s = distinct({x, y});
    const FieldSource src = exact_source(model.kernel, s.points);
    const MixingContext ctx = prepare_mixing(model, src, t);
    const auto acc = sample_statistics(src, 9, spec, [&](const FieldRealization& f, double* out) {
        const auto m = mix(ctx, f);
        const Vec3& u = m.velocity[s.index[0]];
        const Vec3& v = m.velocity[s.index[1]];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) out[3 * i + j] = u(i) * v(j);
    });
    const Mat3 c = binary_correlation_closed(model, x, y, t);
    std::vector<double> pred(9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) pred[3 * i + j] = c(i, j);
    return make_estimate(acc, std::move(pred));
}

Estimate triple_correlation_mc(const TurbulenceModel& model, const Vec3& x, const Vec3& y, const Vec3& z, double t,
                               const EnsembleSpec& spec) {
    const SiteSet s = distinct({x, y, z});
    const FieldSource src = exact_source(model.kernel, s.points);
    const MixingContext ctx = prepare_mixing(model, src, t);
    const auto acc = sample_statistics(src, 27, spec, [&](const FieldRealization& f, double* out) {
        const auto m = mix(ctx, f);
        const Vec3& u = m.velocity[s.index[0]];
        const Vec3& v = m.velocity[s.index[1]];
        const Vec3& w = m.velocity[s.index[2]];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) out[(i * 3 + j) * 3 + k] = u(i) * v(j) * w(k);
    });
    Estimate e = make_estimate(acc, triple_correlation_closed(model, x, y, z, t));
    e.paper_form = triple_correlation_printed(model, x, y, z, t);
    return e;
}

double gaussian_moment_factor(int n, double a, double c) {
    double s = 0.0;
    for (int m = 0; m <= n; m += 2) s += binomial(n, m) * std::pow(a, m) * std::pow(c, m / 2) * double_factorial(m - 1);
    return s;
}

double printed_moment_factor(int n, double a, double c) {
    double s = 0.0;
    for (int m = 0; m <= n; ++m) {
        const double cm = std::pow(c, 0.5 * m);
        s += binomial(n, m) * std::pow(a, m) * 0.5 * (cm + (m % 2 ? -cm : cm));
    }
    return s;
}

Estimate nth_moment_mc(const TurbulenceModel& model, const std::vector<Vec3>& sites, double t, int order,
                       const EnsembleSpec& spec) {
    if (order < 1 || order > 8) throw PreconditionError("nth_moment_mc: order must lie in [1, 8], got " + std::to_string(order));
    const FieldSource src = exact_source(model.kernel, sites);
    const MixingContext ctx = prepare_mixing(model, src, t);
    const std::size_t n = sites.size();
    const auto acc = sample_statistics(src, 3 * n, spec, [&](const FieldRealization& f, double* out) {
        const auto m = mix(ctx, f);
        for (std::size_t s = 0; s < n; ++s)
            for (int c = 0; c < 3; ++c) out[3 * s + c] = std::pow(m.velocity[s](c), order);
    });
    const double a = ctx.amplitude, c = model.kernel.amplitude;
    const double g = gaussian_moment_factor(order, a, c), p = printed_moment_factor(order, a, c);
    std::vector<double> pred(3 * n), printed(3 * n);
    for (std::size_t s = 0; s < n; ++s)
        for (int k = 0; k < 3; ++k) {
            const double un = std::pow(ctx.base[s].velocity(k), order);
            pred[3 * s + k] = un * g;
            printed[3 * s + k] = un * p;
        }
    Estimate e = make_estimate(acc, std::move(pred));
    e.paper_form = std::move(printed);
    return e;
}

Estimate structure_function_mc(const TurbulenceModel& model, const Vec3& x, const Vec3& ell, double t, int p,
                               const EnsembleSpec& spec) {
    if (p < 2 || p > 6) throw PreconditionError("structure_function_mc: p must lie in [2, 6], got " + std::to_string(p));
    const Vec3 y = x + ell;
    const SiteSet s = distinct({x, y});
    const FieldSource src = exact_source(model.kernel, s.points);
    const MixingContext ctx = prepare_mixing(model, src, t);
    const auto acc = sample_statistics(src, 1, spec, [&](const FieldRealization& f, double* out) {
        const auto m = mix(ctx, f);
        const Vec3 d = m.velocity[s.index[1]] - m.velocity[s.index[0]];
        double sum = 0.0;
        for (int i = 0; i < 3; ++i) sum += std::pow(std::abs(d(i)), p);
        out[0] = sum;
    });
    double pred = std::numeric_limits<double>::quiet_NaN();
    if (p % 2 == 0) {
        // each increment component is Gaussian with the mean and variance below
        const double a = ctx.amplitude, c = model.kernel.amplitude;
        const double rho = eval_kernel(model.kernel, x, y) / c;
        const Vec3 u0 = eval_flow(model.flow, x, t).velocity, u1 = eval_flow(model.flow, y, t).velocity;
        pred = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double var = a * a * c * (u1(i) * u1(i) + u0(i) * u0(i) - 2.0 * u1(i) * u0(i) * rho);
            pred += shifted_gaussian_moment(u1(i) - u0(i), std::max(0.0, var), p);
        }
    }
    return make_estimate(acc, {pred});
}

double energy_integral(const BaseFlow& flow, const GridSpec& grid, double t) {
    double s = 0.0;
    for (std::size_t i = 0; i < grid.site_count(); ++i) s += eval_flow(flow, grid.site(i), t).velocity.squaredNorm();
    return 0.5 * s * grid.cell_volume();
}

double enstrophy_integral(const BaseFlow& flow, const GridSpec& grid, double t) {
    double s = 0.0;
    for (std::size_t i = 0; i < grid.site_count(); ++i) s += eval_flow(flow, grid.site(i), t).grad.squaredNorm();
    return s * grid.cell_volume();
}

Estimate energy_integral_mc(const TurbulenceModel& model, const GridSpec& grid, double t, const EnsembleSpec& spec) {
    const FieldSource src(std::make_shared<const SpectralSampler>(model.kernel, grid));
    const MixingContext ctx = prepare_mixing(model, src, t);
    const double dv = grid.cell_volume();
    const auto acc = sample_statistics(src, 1, spec, [&](const FieldRealization& f, double* out) {
        const auto m = mix(ctx, f);
        double s = 0.0;
        for (const Vec3& u : m.velocity) s += u.squaredNorm();
        out[0] = 0.5 * s * dv;
    });
    const double e0 = energy_integral(model.flow, grid, t);
    const double boost = ctx.amplitude * ctx.amplitude * model.kernel.amplitude;
    Estimate e = make_estimate(acc, {(1.0 + boost) * e0});
    e.paper_form = {(1.0 + 0.5 * boost) * e0};
    return e;
}

namespace {

Estimate enstrophy_from(const TurbulenceModel& model, const FieldSource& src, const std::vector<double>& weights,
                        double t, const EnsembleSpec& spec) {
    const MixingContext ctx = prepare_mixing(model, src, t);
    const std::size_t n = src.size();
    const auto acc = sample_statistics(src, 1, spec, [&](const FieldRealization& f, double* out) {
        const auto m = mix(ctx, f, {.gradient = true});
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += weights[i] * m.grad[i].squaredNorm();
        out[0] = s;
    });
    const double a2 = ctx.amplitude * ctx.amplitude;
    const double c = model.kernel.amplitude;
    const Vec3 o = Vec3::Zero();
    const double trace_h = eval_kernel_cross_hessian(model.kernel, o, o).trace();
    double pred = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const FlowState& u = ctx.base[i];
        pred += weights[i] * (u.grad.squaredNorm() * (1.0 + a2 * c) + a2 * u.velocity.squaredNorm() * trace_h);
    }
    return make_estimate(acc, {pred});
}

}  // namespace

Estimate enstrophy_integral_mc(const TurbulenceModel& model, const GridSpec& grid, double t,
                               const EnsembleSpec& spec) {
    const FieldSource src(std::make_shared<const SpectralSampler>(model.kernel, grid, Derivatives{.gradient = true}));
    return enstrophy_from(model, src, std::vector<double>(grid.site_count(), grid.cell_volume()), t, spec);
}

Estimate enstrophy_integral_mc(const TurbulenceModel& model, const std::vector<Vec3>& points,
                               const std::vector<double>& weights, double t, const EnsembleSpec& spec) {
    if (weights.size() != points.size()) throw PreconditionError("enstrophy_integral_mc: one weight per point");
    return enstrophy_from(model, exact_source(model.kernel, points, {.gradient = true}), weights, t, spec);
}

ReynoldsTensorPoint reynolds_tensor(const TurbulenceModel& model, const Vec3& x, double t) {
    const FlowState u = eval_flow(model.flow, x, t);
    const double a = model.amplitude(t), c = model.kernel.amplitude;
    const double boost = 1.0 + a * a * c;
    ReynoldsTensorPoint r;
    const Mat3 uu = u.velocity * u.velocity.transpose();
    r.value = uu * boost;
    for (int k = 0; k < 3; ++k) {
        const Vec3 dk = u.grad.col(k);  // d_k U
        r.grad[k] = (dk * u.velocity.transpose() + u.velocity * dk.transpose()) * boost;
    }
    // Delta(U_i U_j) = U_j Delta U_i + U_i Delta U_j + 2 d_k U_i d_k U_j
    r.laplacian = (u.laplacian * u.velocity.transpose() + u.velocity * u.laplacian.transpose() +
                   2.0 * u.grad * u.grad.transpose()) * boost;
    r.dt = (u.dt * u.velocity.transpose() + u.velocity * u.dt.transpose()) * boost +
           uu * (2.0 * a * model.amplitude_rate(t) * c);
    return r;
}

DecayRatio excess_decay_mc(const TurbulenceModel& model, const Vec3& x, const Vec3& direction, int i, int j,
                           double t, const EnsembleSpec& spec) {
    const double lambda = model.kernel.corr_length;
    const Vec3 e = direction.normalized();
    const std::vector<Vec3> pts{x, x + lambda * e, x + 2.0 * lambda * e};
    const FieldSource src = exact_source(model.kernel, pts);
    const MixingContext ctx = prepare_mixing(model, src, t);
    const double a = ctx.amplitude, c = model.kernel.amplitude;
    const double w1 = ctx.base[0].velocity(i) * ctx.base[1].velocity(j);
    const double w2 = ctx.base[0].velocity(i) * ctx.base[2].velocity(j);
    if (a == 0.0 || w1 == 0.0 || w2 == 0.0) throw PreconditionError("excess_decay_mc: the excess must not vanish");
    const double e1 = std::exp(-1.0), e2 = std::exp(-4.0);
    // entries: s_lambda, s_2lambda, and the linearised log-ratio s_2/e_2 - s_1/e_1
    const auto acc = sample_statistics(src, 3, spec, [&](const FieldRealization& f, double* out) {
        const auto m = mix(ctx, f);
        out[0] = (m.velocity[0](i) * m.velocity[1](j) - w1) / (w1 * a * a * c);
        out[1] = (m.velocity[0](i) * m.velocity[2](j) - w2) / (w2 * a * a * c);
        out[2] = out[1] / e2 - out[0] / e1;
    });
    DecayRatio r;
    r.log_ratio = std::log(acc.mean(1) / acc.mean(0));
    r.std_error = acc.std_error(2);
    return r;
}

}  // namespace bft
