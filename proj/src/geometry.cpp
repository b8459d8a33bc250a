#include "bft/geometry.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace bft {

Curve::Curve(std::vector<Vec3> nodes, bool closed) : nodes_(std::move(nodes)), closed_(closed) {
    if (nodes_.size() < 2) throw PreconditionError("curve: needs at least two nodes");
    const std::size_t segs = closed_ ? nodes_.size() : nodes_.size() - 1;
    for (std::size_t s = 0; s < segs; ++s) {
        const Vec3& a = nodes_[s];
        const Vec3& b = nodes_[(s + 1) % nodes_.size()];
        if (a == b) throw PreconditionError("curve: consecutive nodes coincide at segment " + std::to_string(s));
        midpoints_.push_back(0.5 * (a + b));
        tangents_.push_back(b - a);
    }
}

Curve Curve::square(const Vec3& center, double side, int segments_per_side) {
    const double h = 0.5 * side;
    const Vec3 corners[4] = {center + Vec3(-h, -h, 0), center + Vec3(h, -h, 0), center + Vec3(h, h, 0),
                             center + Vec3(-h, h, 0)};
    std::vector<Vec3> nodes;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < segments_per_side; ++i) {
            const double s = static_cast<double>(i) / segments_per_side;
            nodes.push_back(corners[c] + s * (corners[(c + 1) % 4] - corners[c]));
        }
    return Curve(std::move(nodes), true);
}

Curve Curve::circle(const Vec3& center, double radius, int segments) {
    std::vector<Vec3> nodes;
    for (int i = 0; i < segments; ++i) {
        const double phi = 2.0 * kPi * i / segments;
        nodes.push_back(center + radius * Vec3(std::cos(phi), std::sin(phi), 0));
    }
    return Curve(std::move(nodes), true);
}

Curve Curve::segment(const Vec3& from, const Vec3& to, int segments) {
    std::vector<Vec3> nodes;
    for (int i = 0; i <= segments; ++i) nodes.push_back(from + (static_cast<double>(i) / segments) * (to - from));
    return Curve(std::move(nodes), false);
}

namespace {

/// Per-segment weights (U . dx) f at the midpoints.
std::vector<double> line_weights(const BaseFlow& flow, const Curve& c, double t, const TestFunction* f = nullptr) {
    std::vector<double> w(c.segment_count());
    for (std::size_t s = 0; s < w.size(); ++s) {
        w[s] = eval_flow(flow, c.midpoints()[s], t).velocity.dot(c.tangents()[s]);
        if (f) w[s] *= eval_test_function(*f, c.midpoints()[s], t);
    }
    return w;
}

/// sum_s sum_r w1_s w2_r Sigma(p1_s, p2_r)
double kernel_double_sum(const Kernel& k, const std::vector<Vec3>& p1, const std::vector<double>& w1,
                         const std::vector<Vec3>& p2, const std::vector<double>& w2) {
    double total = 0.0;
    for (std::size_t s = 0; s < p1.size(); ++s) {
        double row = 0.0;
        for (std::size_t r = 0; r < p2.size(); ++r) row += w2[r] * eval_kernel(k, p1[s], p2[r]);
        total += w1[s] * row;
    }
    return total;
}

double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

/// Joint exact sampler over the midpoints of several curves.
struct CurveSet {
    std::vector<Vec3> points;
    std::vector<std::size_t> offset;  ///< first point of each curve
    std::vector<std::vector<double>> weights;
    std::shared_ptr<const ExactSampler> sampler;

    CurveSet(const TurbulenceModel& model, std::initializer_list<const Curve*> curves, double t,
             const TestFunction* f = nullptr) {
        for (const Curve* c : curves) {
            offset.push_back(points.size());
            points.insert(points.end(), c->midpoints().begin(), c->midpoints().end());
            weights.push_back(line_weights(model.flow, *c, t, f));
        }
        sampler = std::make_shared<const ExactSampler>(model.kernel, points);
    }

    /// Stochastic line integral of curve c for one draw: sum w (1 + a B).
    double integral(const FieldRealization& f, std::size_t c, double a) const {
        double s = 0.0;
        const auto& w = weights[c];
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * (1.0 + a * f.values[offset[c] + i]);
        return s;
    }
};

Mat3 cross_matrix(const Vec3& v) {
    Mat3 m;
    m << 0, -v(2), v(1), v(2), 0, -v(0), -v(1), v(0), 0;
    return m;
}

}  // namespace

double circulation(const BaseFlow& flow, const Curve& curve, double t) { return sum(line_weights(flow, curve, t)); }

double circulation_variance_quadrature(const TurbulenceModel& model, const Curve& curve, double t) {
    const double a = model.amplitude(t);
    const auto w = line_weights(model.flow, curve, t);
    return a * a * kernel_double_sum(model.kernel, curve.midpoints(), w, curve.midpoints(), w);
}

CirculationEstimate stochastic_circulation_mc(const TurbulenceModel& model, const Curve& curve, double t,
                                              const EnsembleSpec& spec) {
    if (spec.size < 2) throw PreconditionError("ensemble: size must be >= 2");
    model.validate();
    const CurveSet set(model, {&curve}, t);
    const double a = model.amplitude(t);
    // Plain draws: the variance is part of the output, so no antithetic pairing.
    const auto stats = run_ensemble<RunningStats>(spec.size, spec.workers, [] { return RunningStats{}; },
                                                  [&](std::uint64_t r, RunningStats& acc) {
                                                      acc.add(set.integral(set.sampler->draw(spec.seed, r), 0, a));
                                                  });
    CirculationEstimate e;
    e.count = stats.count();
    e.mean = stats.mean();
    e.std_error = stats.std_error();
    e.prediction = sum(set.weights[0]);
    e.variance = stats.variance();
    e.variance_std_error = stats.variance_std_error();
    e.variance_prediction = circulation_variance_quadrature(model, curve, t);
    return e;
}

namespace {

/// curl from g(i, j) = d_j U_i
Vec3 curl_of(const Mat3& g) { return Vec3(g(2, 1) - g(1, 2), g(0, 2) - g(2, 0), g(1, 0) - g(0, 1)); }

}  // namespace

Vec3 vorticity(const BaseFlow& flow, const Vec3& x, double t) { return curl_of(eval_flow(flow, x, t).grad); }

Estimate mean_vorticity_mc(const TurbulenceModel& model, const FieldSource& source, double t,
                           const EnsembleSpec& spec) {
    const MixingContext ctx = prepare_mixing(model, source, t);
    const std::size_t n = source.size();
    const auto acc = sample_statistics(source, 3 * n, spec, [&](const FieldRealization& f, double* out) {
        const auto s = mix(ctx, f, {.gradient = true});
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 w = curl_of(s.grad[i]);
            for (int k = 0; k < 3; ++k) out[3 * i + k] = w(k);
        }
    });
    std::vector<double> pred(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 w = curl_of(ctx.base[i].grad);
        for (int k = 0; k < 3; ++k) pred[3 * i + k] = w(k);
    }
    return make_estimate(acc, std::move(pred));
}

Mat3 vorticity_correlation_closed(const TurbulenceModel& model, const Vec3& x, const Vec3& y, double t) {
    const double a = model.amplitude(t), a2 = a * a;
    const FlowState fx = eval_flow(model.flow, x, t), fy = eval_flow(model.flow, y, t);
    const Vec3 wx = curl_of(fx.grad), wy = curl_of(fy.grad);
    const Vec3& u = fx.velocity;
    const Vec3& v = fy.velocity;
    const double s = eval_kernel(model.kernel, x, y);
    const Vec3 g = eval_kernel_grad(model.kernel, x, y);
    const Mat3 h = eval_kernel_cross_hessian(model.kernel, x, y);
    // (grad B x U)_i = -(U x) grad B, so E[(gx x U)_i (gy x V)_j] = (Ux H Vx^T)_ij
    const Mat3 ux = cross_matrix(u), vx = cross_matrix(v);
    return wx * wy.transpose() * (1.0 + a2 * s) - a2 * wx * g.cross(v).transpose() +
           a2 * g.cross(u) * wy.transpose() + a2 * ux * h * vx.transpose();
}

Estimate vorticity_correlation_mc(const TurbulenceModel& model, const Vec3& x, const Vec3& y, double t,
                                  const EnsembleSpec& spec) {
    std::vector<Vec3> pts{x};
    if (y != x) pts.push_back(y);
    const std::size_t iy = pts.size() - 1;
    const FieldSource src(std::make_shared<const ExactSampler>(model.kernel, pts, Derivatives{.gradient = true}));
    const MixingContext ctx = prepare_mixing(model, src, t);
    const auto acc = sample_statistics(src, 9, spec, [&](const FieldRealization& f, double* out) {
        const auto s = mix(ctx, f, {.gradient = true});
        const Vec3 wx = curl_of(s.grad[0]), wy = curl_of(s.grad[iy]);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) out[3 * i + j] = wx(i) * wy(j);
    });
    const Mat3 c = vorticity_correlation_closed(model, x, y, t);
    std::vector<double> pred(9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) pred[3 * i + j] = c(i, j);
    return make_estimate(acc, std::move(pred));
}

double vortex_tangle_closed(const TurbulenceModel& model, const Curve& c1, const Curve& c2, double t) {
    const double a = model.amplitude(t);
    const auto w1 = line_weights(model.flow, c1, t), w2 = line_weights(model.flow, c2, t);
    return sum(w1) * sum(w2) + a * a * kernel_double_sum(model.kernel, c1.midpoints(), w1, c2.midpoints(), w2);
}

Estimate vortex_tangle_mc(const TurbulenceModel& model, const Curve& c1, const Curve& c2, double t,
                          const EnsembleSpec& spec) {
    model.validate();
    const CurveSet set(model, {&c1, &c2}, t);
    const double a = model.amplitude(t);
    const FieldSource src(set.sampler);
    const auto acc = sample_statistics(src, 1, spec, [&](const FieldRealization& f, double* out) {
        out[0] = set.integral(f, 0, a) * set.integral(f, 1, a);
    });
    return make_estimate(acc, {vortex_tangle_closed(model, c1, c2, t)});
}

double triple_tangle_closed(const TurbulenceModel& model, const Curve& c1, const Curve& c2, const Curve& c3,
                            double t) {
    const double a = model.amplitude(t);
    const auto w1 = line_weights(model.flow, c1, t), w2 = line_weights(model.flow, c2, t),
               w3 = line_weights(model.flow, c3, t);
    const double g1 = sum(w1), g2 = sum(w2), g3 = sum(w3);
    const auto& k = model.kernel;
    const double q12 = kernel_double_sum(k, c1.midpoints(), w1, c2.midpoints(), w2);
    const double q13 = kernel_double_sum(k, c1.midpoints(), w1, c3.midpoints(), w3);
    const double q23 = kernel_double_sum(k, c2.midpoints(), w2, c3.midpoints(), w3);
    return g1 * g2 * g3 + a * a * (g3 * q12 + g2 * q13 + g1 * q23);
}

Estimate triple_tangle_mc(const TurbulenceModel& model, const Curve& c1, const Curve& c2, const Curve& c3, double t,
                          const EnsembleSpec& spec) {
    model.validate();
    const CurveSet set(model, {&c1, &c2, &c3}, t);
    const double a = model.amplitude(t);
    const FieldSource src(set.sampler);
    const auto acc = sample_statistics(src, 1, spec, [&](const FieldRealization& f, double* out) {
        out[0] = set.integral(f, 0, a) * set.integral(f, 1, a) * set.integral(f, 2, a);
    });
    return make_estimate(acc, {triple_tangle_closed(model, c1, c2, c3, t)});
}

namespace {

std::vector<ComplexArray> component_spectra(const SpectralOps& ops, const std::vector<Vec3>& v) {
    std::vector<ComplexArray> out;
    RealArray comp = ops.fft().make_real();
    for (int a = 0; a < 3; ++a) {
        for (std::size_t s = 0; s < v.size(); ++s) comp[s] = v[s](a);
        out.push_back(ops.fft().make_spectral());
        ops.to_spectral(comp.data(), out.back().data());
    }
    return out;
}

void require_periodic(const GridVectorField& f, const char* who) {
    if (!f.periodic) throw CapabilityError(std::string(who) + ": only periodic grid fields are supported");
    f.grid.validate();
    if (f.values.size() != f.grid.site_count()) throw PreconditionError(std::string(who) + ": field size does not match grid");
}

}  // namespace

GridVectorField spectral_curl(const GridVectorField& field) {
    require_periodic(field, "spectral_curl");
    const SpectralOps ops(field.grid);
    const auto spec = component_spectra(ops, field.values);
    const std::size_t n = field.values.size();
    GridVectorField out{field.grid, std::vector<Vec3>(n, Vec3::Zero()), true};
    RealArray d = ops.fft().make_real();
    // curl_i = eps_ijk d_j v_k
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
            if (j == k) continue;
            const int i = 3 - j - k;
            const double sign = ((j - i + 3) % 3 == 1) ? 1.0 : -1.0;
            ops.derivative(spec[k].data(), j, d.data());
            for (std::size_t s = 0; s < n; ++s) out.values[s](i) += sign * d[s];
        }
    return out;
}

GridVectorField biot_savart_reconstruct(const GridVectorField& vorticity, double tolerance) {
    require_periodic(vorticity, "biot_savart_reconstruct");
    const GridSpec& g = vorticity.grid;
    const SpectralOps ops(g);
    const auto w = component_spectra(ops, vorticity.values);
    const std::size_t n = vorticity.values.size();

    // solenoidal check
    RealArray d = ops.fft().make_real();
    std::vector<double> div(n, 0.0);
    for (int a = 0; a < 3; ++a) {
        ops.derivative(w[a].data(), a, d.data());
        for (std::size_t s = 0; s < n; ++s) div[s] += d[s];
    }
    double max_div = 0.0, max_w = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        max_div = std::max(max_div, std::abs(div[s]));
        max_w = std::max(max_w, vorticity.values[s].cwiseAbs().maxCoeff());
    }
    const double k_max = kPi * g.resolution / g.side_length;
    if (max_div > tolerance * std::max(max_w, 1e-300) * k_max) {
        throw ConsistencyError("biot_savart_reconstruct: vorticity is not solenoidal (max |div| = " +
                               std::to_string(max_div) + ")");
    }

    // U^ = i (k x w^) / |k|^2
    std::vector<ComplexArray> u;
    for (int a = 0; a < 3; ++a) u.push_back(ops.fft().make_spectral());
    const std::complex<double> I(0.0, 1.0);
    ops.for_each_mode([&](std::size_t idx, int i, int j, int k) {
        const double k2 = ops.k_squared(i, j, k);
        const Vec3 kv(ops.kd(0, i), ops.kd(1, j), ops.kd(2, k));
        for (int a = 0; a < 3; ++a) {
            const int b = (a + 1) % 3, c = (a + 2) % 3;
            u[a][idx] = k2 > 0.0 ? I * (kv(b) * w[c][idx] - kv(c) * w[b][idx]) / k2 : std::complex<double>(0.0);
        }
    });
    GridVectorField out{g, std::vector<Vec3>(n), true};
    RealArray comp = ops.fft().make_real();
    for (int a = 0; a < 3; ++a) {
        ops.to_physical(u[a].data(), comp.data());
        for (std::size_t s = 0; s < n; ++s) out.values[s](a) = comp[s];
    }
    return out;
}

double eval_test_function(const TestFunction& f, const Vec3& x, double /*t*/) {
    if (const auto* c = std::get_if<ConstantFn>(&f)) return c->value;
    if (const auto* b = std::get_if<GaussianBumpFn>(&f)) {
        return b->height * std::exp(-(x - b->center).squaredNorm() / (b->width * b->width));
    }
    const auto& p = std::get<PolynomialFn>(f);
    return p.c0 + p.linear.dot(x) + x.dot(p.quadratic * x);
}

double HopfEstimate::z() const {
    const std::complex<double> d = mc - closed_form;
    auto part = [](double diff, double se) {
        if (se > 0.0) return std::abs(diff) / se;
        return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    };
    return std::max(part(d.real(), std_error_re), part(d.imag(), std_error_im));
}

std::complex<double> hopf_closed_form(const TurbulenceModel& model, const Curve& curve, const TestFunction& f,
                                      double t) {
    const double a = model.amplitude(t);
    const auto w = line_weights(model.flow, curve, t, &f);
    const double mu = sum(w);
    const double var = a * a * kernel_double_sum(model.kernel, curve.midpoints(), w, curve.midpoints(), w);
    return std::exp(std::complex<double>(-0.5 * var, mu));
}

HopfEstimate hopf_functional(const TurbulenceModel& model, const Curve& curve, const TestFunction& f, double t,
                             const EnsembleSpec& spec) {
    model.validate();
    const CurveSet set(model, {&curve}, t, &f);
    const double a = model.amplitude(t);
    const FieldSource src(set.sampler);
    const auto acc = sample_statistics(src, 2, spec, [&](const FieldRealization& r, double* out) {
        const double phase = set.integral(r, 0, a);
        out[0] = std::cos(phase);
        out[1] = std::sin(phase);
    });
    HopfEstimate h;
    h.mc = {acc.mean(0), acc.mean(1)};
    h.std_error_re = acc.std_error(0);
    h.std_error_im = acc.std_error(1);
    h.count = acc.count();
    h.closed_form = hopf_closed_form(model, curve, f, t);
    return h;
}

}  // namespace bft
