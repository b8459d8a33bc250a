#include "bft/flows.hpp"

#include <cmath>
#include <string>

namespace bft {

namespace {

FlowState taylor_green(const TaylorGreenFlow& tg, double nu, const Vec3& x, double t) {
    const double a = tg.amplitude, k = tg.wavenumber;
    const double f = std::exp(-2.0 * nu * k * k * t);
    const double sx = std::sin(k * x(0)), cx = std::cos(k * x(0));
    const double sy = std::sin(k * x(1)), cy = std::cos(k * x(1));

    FlowState s;
    s.velocity = Vec3(a * sx * cy * f, -a * cx * sy * f, 0.0);
    s.grad << a * k * cx * cy * f, -a * k * sx * sy * f, 0.0,
              a * k * sx * sy * f, -a * k * cx * cy * f, 0.0,
              0.0, 0.0, 0.0;
    s.laplacian = -2.0 * k * k * s.velocity;
    s.dt = -2.0 * nu * k * k * s.velocity;
    s.pressure = 0.25 * a * a * (std::cos(2 * k * x(0)) + std::cos(2 * k * x(1))) * f * f;
    s.grad_pressure = Vec3(-0.5 * a * a * k * std::sin(2 * k * x(0)) * f * f,
                           -0.5 * a * a * k * std::sin(2 * k * x(1)) * f * f, 0.0);
    return s;
}

Vec3 mean_velocity(const BaseFlow& flow, const GridSpec& grid, double t, bool rate) {
    grid.validate();
    if (const auto* u = std::get_if<UniformFlow>(&flow.kind)) return rate ? Vec3::Zero() : u->velocity;
    Vec3 sum = Vec3::Zero();
    for (std::size_t i = 0; i < grid.site_count(); ++i) {
        const FlowState s = eval_flow(flow, grid.site(i), t);
        sum += rate ? s.dt : s.velocity;
    }
    return sum / static_cast<double>(grid.site_count());
}

void require_viscosity(const BaseFlow& flow) {
    if (!(flow.viscosity > 0.0) || !std::isfinite(flow.viscosity)) {
        throw PreconditionError("flow: viscosity must be positive, got " + std::to_string(flow.viscosity));
    }
}

}  // namespace

FlowState eval_flow(const BaseFlow& flow, const Vec3& x, double t) {
    if (t < 0.0) throw PreconditionError("eval_flow: time must be >= 0");
    if (const auto* u = std::get_if<UniformFlow>(&flow.kind)) {
        FlowState s;
        s.velocity = u->velocity;
        return s;
    }
    return taylor_green(std::get<TaylorGreenFlow>(flow.kind), flow.viscosity, x, t);
}

std::vector<FlowState> eval_flow(const BaseFlow& flow, const std::vector<Vec3>& sites, double t) {
    std::vector<FlowState> out;
    out.reserve(sites.size());
    for (const auto& x : sites) out.push_back(eval_flow(flow, x, t));
    return out;
}

double volume_avg_reynolds(const BaseFlow& flow, const GridSpec& grid, double t) {
    require_viscosity(flow);
    return mean_velocity(flow, grid, t, false).norm() * grid.side_length / flow.viscosity;
}

double volume_avg_reynolds_rate(const BaseFlow& flow, const GridSpec& grid, double t) {
    require_viscosity(flow);
    const Vec3 m = mean_velocity(flow, grid, t, false);
    const double norm = m.norm();
    if (norm == 0.0) return 0.0;
    const Vec3 dm = mean_velocity(flow, grid, t, true);
    return m.dot(dm) / norm * grid.side_length / flow.viscosity;
}

void MixingConfig::validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw PreconditionError("mixing: beta must be >= 0");
    if (!(re_c > 0.0) || !std::isfinite(re_c)) throw PreconditionError("mixing: re_c must be > 0");
    if (psi.form != PsiForm::Sqrt && !(psi.alpha > 0.0)) throw PreconditionError("mixing: psi alpha must be > 0");
    if (psi.form == PsiForm::PowerLaw && !(psi.exponent > 0.0)) {
        throw PreconditionError("mixing: psi exponent must be > 0");
    }
    if (re_override && !(*re_override >= 0.0)) throw PreconditionError("mixing: re_override must be >= 0");
    if (psi_cap && !(*psi_cap >= 0.0)) throw PreconditionError("mixing: psi cap must be >= 0");
}

double switch_function(const MixingConfig& config, double re) { return re > config.re_c ? 1.0 : 0.0; }

double psi(const MixingConfig& config, double re) {
    if (re < 0.0) throw PreconditionError("psi: Reynolds number must be >= 0");
    if (switch_function(config, re) == 0.0) return 0.0;
    const double d = re - config.re_c;
    double v = 0.0;
    switch (config.psi.form) {
    case PsiForm::PowerLaw: v = config.psi.alpha * std::pow(d, config.psi.exponent); break;
    case PsiForm::Exponential: v = std::expm1(config.psi.alpha * d); break;
    case PsiForm::Sqrt: v = std::sqrt(d); break;
    }
    if (config.psi_cap) v = std::min(v, *config.psi_cap);
    return v;
}

double psi_derivative(const MixingConfig& config, double re) {
    if (switch_function(config, re) == 0.0) return 0.0;
    if (config.psi_cap && psi(config, re) >= *config.psi_cap) return 0.0;
    const double d = re - config.re_c;
    const auto& p = config.psi;
    switch (p.form) {
    case PsiForm::PowerLaw: return p.alpha * p.exponent * std::pow(d, p.exponent - 1.0);
    case PsiForm::Exponential: return p.alpha * std::exp(p.alpha * d);
    case PsiForm::Sqrt: return 0.5 / std::sqrt(d);
    }
    return 0.0;
}

BoostFactors boost_factors(const MixingConfig& config, const Kernel& kernel, double re) {
    const double p = psi(config, re);
    BoostFactors b;
    b.psi1 = config.beta * config.beta * p * p * kernel.amplitude;
    b.psi2 = 1.0 + b.psi1;
    return b;
}

void TurbulenceModel::validate() const {
    mixing.validate();
    kernel.validate();
    domain.validate();
    require_viscosity(flow);
}

double TurbulenceModel::reynolds(double t) const {
    return mixing.re_override ? *mixing.re_override : volume_avg_reynolds(flow, domain, t);
}

double TurbulenceModel::reynolds_rate(double t) const {
    return mixing.re_override ? 0.0 : volume_avg_reynolds_rate(flow, domain, t);
}

double TurbulenceModel::amplitude(double t) const { return mixing.beta * psi(mixing, reynolds(t)); }

double TurbulenceModel::amplitude_rate(double t) const {
    const double rate = reynolds_rate(t);
    if (rate == 0.0) return 0.0;
    return mixing.beta * psi_derivative(mixing, reynolds(t)) * rate;
}

}  // namespace bft
