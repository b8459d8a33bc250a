#include "bft/mixing.hpp"

namespace bft {

MixingContext prepare_mixing(const TurbulenceModel& model, const std::vector<Vec3>& sites, double t) {
    model.validate();
    MixingContext ctx;
    ctx.base = eval_flow(model.flow, sites, t);
    ctx.amplitude = model.amplitude(t);
    ctx.amplitude_rate = model.amplitude_rate(t);
    ctx.time = t;
    return ctx;
}

MixingContext prepare_mixing(const TurbulenceModel& model, const FieldSource& source, double t) {
    std::vector<Vec3> sites(source.size());
    for (std::size_t i = 0; i < sites.size(); ++i) sites[i] = source.site(i);
    return prepare_mixing(model, sites, t);
}

TurbulentSample mix(const MixingContext& ctx, const FieldRealization& field, Derivatives want) {
    const std::size_t n = field.size();
    if (ctx.base.size() != n) throw CapabilityError("mix: realization and mixing context have different sites");
    if (want.gradient && !field.has_gradient()) throw CapabilityError("mix: realization carries no gradient");
    if (want.laplacian && !(field.has_laplacian() && field.has_gradient())) {
        throw CapabilityError("mix: Laplacian output needs the field gradient and Laplacian");
    }
    const double a = ctx.amplitude;
    TurbulentSample out;
    out.amplitude = a;
    out.velocity.resize(n);
    out.dt.resize(n);
    if (want.gradient) out.grad.resize(n);
    if (want.laplacian) out.laplacian.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        const FlowState& u = ctx.base[s];
        const double b = field.values[s];
        const double factor = 1.0 + a * b;
        out.velocity[s] = u.velocity * factor;
        out.dt[s] = u.dt * factor + u.velocity * (ctx.amplitude_rate * b);
        if (want.gradient) out.grad[s] = u.grad * factor + a * u.velocity * field.gradient[s].transpose();
        if (want.laplacian) {
            out.laplacian[s] = u.laplacian * factor + (2.0 * a) * (u.grad * field.gradient[s]) +
                               u.velocity * (a * field.laplacian[s]);
        }
    }
    return out;
}

TurbulentSample mix(const TurbulenceModel& model, const FieldRealization& field, double t, Derivatives want) {
    std::vector<Vec3> sites(field.size());
    for (std::size_t i = 0; i < sites.size(); ++i) sites[i] = field.site(i);
    return mix(prepare_mixing(model, sites, t), field, want);
}

Estimate make_estimate(const FieldAccumulator& acc, std::vector<double> prediction) {
    Estimate e;
    e.count = acc.count();
    e.mc = acc.means();
    e.std_error.resize(acc.width());
    for (std::size_t i = 0; i < acc.width(); ++i) e.std_error[i] = acc.std_error(i);
    e.prediction = std::move(prediction);
    return e;
}

Estimate mean_velocity_mc(const TurbulenceModel& model, const FieldSource& source, double t,
                          const EnsembleSpec& spec) {
    const MixingContext ctx = prepare_mixing(model, source, t);
    const std::size_t n = source.size();
    const auto acc = sample_statistics(source, 3 * n, spec, [&](const FieldRealization& f, double* out) {
        const auto s = mix(ctx, f);
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) out[3 * i + c] = s.velocity[i](c);
    });
    std::vector<double> pred(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) pred[3 * i + c] = ctx.base[i].velocity(c);
    return make_estimate(acc, std::move(pred));
}

Estimate mean_turbulent_divergence(const TurbulenceModel& model, const FieldSource& source, double t,
                                   const EnsembleSpec& spec) {
    const MixingContext ctx = prepare_mixing(model, source, t);
    const std::size_t n = source.size();
    const auto acc = sample_statistics(source, n, spec, [&](const FieldRealization& f, double* out) {
        const auto s = mix(ctx, f, {.gradient = true});
        for (std::size_t i = 0; i < n; ++i) out[i] = s.grad[i].trace();
    });
    std::vector<double> pred(n);
    for (std::size_t i = 0; i < n; ++i) pred[i] = ctx.base[i].grad.trace();
    return make_estimate(acc, std::move(pred));
}

Estimate isotropy_defect(const TurbulenceModel& model, const FieldSource& source, double t,
                         const EnsembleSpec& spec) {
    const MixingContext ctx = prepare_mixing(model, source, t);
    const std::size_t n = source.size();
    // d_i U_j = grad(j, i), so the defect entry (i, j) is grad(j, i) - grad(i, j).
    auto defect = [](const Mat3& g, double* out) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) out[3 * i + j] = g(j, i) - g(i, j);
    };
    const auto acc = sample_statistics(source, 9 * n, spec, [&](const FieldRealization& f, double* out) {
        const auto s = mix(ctx, f, {.gradient = true});
        for (std::size_t i = 0; i < n; ++i) defect(s.grad[i], out + 9 * i);
    });
    std::vector<double> pred(9 * n);
    for (std::size_t i = 0; i < n; ++i) defect(ctx.base[i].grad, pred.data() + 9 * i);
    return make_estimate(acc, std::move(pred));
}

}  // namespace bft
