#include "bft/flows.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace bft;

namespace {

BaseFlow tg(double a = 1.0, double k = 1.0, double nu = 0.1) { return BaseFlow{TaylorGreenFlow{a, k}, nu}; }

}  // namespace

TEST_CASE("uniform flow has no derivatives") {
    const BaseFlow f{UniformFlow{Vec3(0, 0, 1)}, 0.01};
    const auto s = eval_flow(f, Vec3(0.3, 0.2, 0.1), 2.0);
    CHECK(s.velocity == Vec3(0, 0, 1));
    CHECK(s.grad == Mat3::Zero());
    CHECK(s.laplacian == Vec3::Zero());
    CHECK(s.dt == Vec3::Zero());
    CHECK(s.grad_pressure == Vec3::Zero());
    CHECK_THROWS_AS(eval_flow(f, Vec3::Zero(), -1.0), PreconditionError);
}

TEST_CASE("taylor-green point values") {
    const auto s = eval_flow(tg(), Vec3(kPi / 2, 0, 0), 0.0);
    CHECK((s.velocity - Vec3(1, 0, 0)).norm() < 1e-15);
}

TEST_CASE("taylor-green closed-form derivatives against finite differences") {
    const BaseFlow f = tg(1.3, 2.0, 0.07);
    const double h = 1e-3;
    for (int n = 0; n < 20; ++n) {
        const Vec3 x(0.37 * n, 1.1 - 0.21 * n, 0.05 * n);
        const double t = 0.01 + 0.03 * n;
        const auto s = eval_flow(f, x, t);
        for (int i = 0; i < 3; ++i) {
            auto ui = [&](const Vec3& p) { return eval_flow(f, p, t).velocity(i); };
            const Vec3 g = oracle::fd_gradient(ui, x, h);
            for (int j = 0; j < 3; ++j) CHECK(s.grad(i, j) == doctest::Approx(g(j)).scale(1.0).epsilon(1e-8));
            double lap = 0.0;
            for (int j = 0; j < 3; ++j) {
                auto gij = [&](const Vec3& p) { return eval_flow(f, p, t).grad(i, j); };
                lap += oracle::fd_gradient(gij, x, h)(j);
            }
            CHECK(s.laplacian(i) == doctest::Approx(lap).scale(1.0).epsilon(1e-8));
            const double dt = (eval_flow(f, x, t + h).velocity(i) - eval_flow(f, x, t - h).velocity(i)) / (2 * h);
            CHECK(s.dt(i) == doctest::Approx(dt).scale(1.0).epsilon(1e-6));
        }
        auto p = [&](const Vec3& q) { return eval_flow(f, q, t).pressure; };
        CHECK((s.grad_pressure - oracle::fd_gradient(p, x, h)).norm() < 1e-8);
        CHECK(std::abs(s.grad.trace()) < 1e-14);
    }
}

TEST_CASE("taylor-green satisfies the momentum equation") {
    const BaseFlow f = tg(0.8, 3.0, 0.05);
    double worst = 0.0;
    for (int n = 0; n < 100; ++n) {
        const Vec3 x(std::sin(1.7 * n) * 3, std::cos(0.9 * n) * 3, 0.1 * n);
        const double t = 0.01 * n;
        const auto s = eval_flow(f, x, t);
        const Vec3 r = s.dt - f.viscosity * s.laplacian + s.convective() + s.grad_pressure;
        worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("volume-averaged Reynolds number") {
    CHECK(volume_avg_reynolds({UniformFlow{Vec3(1, 0, 0)}, 0.01}, GridSpec{1.0, 8}, 0) ==
          doctest::Approx(100).epsilon(1e-14));
    CHECK(volume_avg_reynolds({UniformFlow{Vec3(0, 2, 0)}, 0.1}, GridSpec{0.5, 8}, 0) ==
          doctest::Approx(10).epsilon(1e-14));
    CHECK(volume_avg_reynolds(tg(1, 2 * kPi, 0.1), GridSpec{1.0, 16}, 0.2) < 1e-12);
    CHECK_THROWS_AS(volume_avg_reynolds({UniformFlow{}, 0.0}, GridSpec{1.0, 8}, 0), PreconditionError);
    // (U, L, nu) -> (aU, bL, ab nu) leaves Re unchanged
    const double re1 = volume_avg_reynolds({UniformFlow{Vec3(1, 2, 3)}, 0.3}, GridSpec{2.0, 8}, 0);
    const double re2 = volume_avg_reynolds({UniformFlow{Vec3(5, 10, 15)}, 0.3 * 5 * 0.25}, GridSpec{0.5, 8}, 0);
    CHECK(re1 == doctest::Approx(re2).epsilon(1e-14));
}

TEST_CASE("Reynolds rate against a time difference") {
    // On a cell that is not a whole period the mean velocity is nonzero and decays.
    const BaseFlow f = tg(1.0, 1.0, 0.2);
    const GridSpec g{1.0, 16, Vec3(0.1, 0.2, 0)};
    const double t = 0.5, h = 1e-4;
    const double fd = (volume_avg_reynolds(f, g, t + h) - volume_avg_reynolds(f, g, t - h)) / (2 * h);
    CHECK(volume_avg_reynolds(f, g, t) > 1.0);
    CHECK(volume_avg_reynolds_rate(f, g, t) == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("psi forms, switch and monotonicity") {
    MixingConfig c;
    c.re_c = 10;
    for (PsiForm form : {PsiForm::PowerLaw, PsiForm::Exponential, PsiForm::Sqrt}) {
        c.psi = {form, 0.5, 1.5};
        CHECK(psi(c, 10) == 0.0);
        CHECK(psi(c, 3) == 0.0);
        CHECK(switch_function(c, 10) == 0.0);
        CHECK(switch_function(c, 10.0001) == 1.0);
        double prev = 0.0;
        for (double re = 10.01; re < 40; re += 0.01) {
            const double v = psi(c, re);
            REQUIRE(v > prev);
            prev = v;
        }
        const double re = 13.7, h = 1e-6;
        CHECK(psi_derivative(c, re) == doctest::Approx((psi(c, re + h) - psi(c, re - h)) / (2 * h)).epsilon(1e-7));
    }
    c.psi = {PsiForm::PowerLaw, 1.0, 2.0};
    CHECK(psi(c, 13) == doctest::Approx(9.0).epsilon(1e-15));
    c.psi = {PsiForm::Exponential, 1.0, 1.0};
    CHECK(psi(c, 11) == doctest::Approx(std::exp(1.0) - 1).epsilon(1e-15));
    c.psi = {PsiForm::Sqrt, 1.0, 1.0};
    CHECK(psi(c, 14) == doctest::Approx(2.0).epsilon(1e-15));
    c.psi_cap = 1.5;
    CHECK(psi(c, 14) == 1.5);
    CHECK(psi_derivative(c, 14) == 0.0);
    CHECK_THROWS_AS(psi(c, -1.0), PreconditionError);
}

TEST_CASE("mixing config validation") {
    MixingConfig c;
    CHECK_NOTHROW(c.validate());
    c.beta = 0.0;
    CHECK_NOTHROW(c.validate());
    c.beta = -1.0;
    CHECK_THROWS_AS(c.validate(), PreconditionError);
    c.beta = 1.0;
    c.re_c = 0.0;
    CHECK_THROWS_AS(c.validate(), PreconditionError);
    c.re_c = 1.0;
    c.psi.alpha = 0.0;
    CHECK_THROWS_AS(c.validate(), PreconditionError);
}

TEST_CASE("boost factors") {
    MixingConfig c;
    c.re_c = 5;
    c.psi = {PsiForm::PowerLaw, 1.0, 1.0};
    const auto laminar = boost_factors(c, {1, 1, 2}, 5.0);
    CHECK(laminar.psi1 == 0.0);
    CHECK(laminar.psi2 == 1.0);
    c.beta = 1;
    const auto one = boost_factors(c, {1, 1, 2}, 6.0);
    CHECK(one.psi1 == 1.0);
    CHECK(one.psi2 == 2.0);
    c.beta = 2;
    const auto b = boost_factors(c, {3, 1, 2}, 5.5);
    CHECK(b.psi1 == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(b.psi2 == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("turbulence model amplitude") {
    TurbulenceModel m{tg(1, 2 * kPi, 0.01), {}, {1, 0.1, 2}, GridSpec{1.0, 16}};
    m.mixing.re_c = 1.0;
    CHECK(m.amplitude(0) == 0.0);  // mean-zero flow: switched off without an override
    m.mixing.re_override = 2.0;
    CHECK(m.reynolds(0.3) == 2.0);
    CHECK(m.amplitude(0.3) == 1.0);
    CHECK(m.amplitude_rate(0.3) == 0.0);
    CHECK(m.boost(0.3).psi2 == 2.0);

    // time-varying Re: amplitude rate matches the time difference
    TurbulenceModel v{tg(1, 1, 0.2), {}, {1, 0.1, 2}, GridSpec{1.0, 16, Vec3(0.1, 0.2, 0)}};
    v.mixing.re_c = 0.5;
    v.mixing.psi = {PsiForm::PowerLaw, 0.3, 1.5};
    const double t = 0.4, h = 1e-4;
    CHECK(v.amplitude(t) > 0.0);
    CHECK(v.amplitude_rate(t) == doctest::Approx((v.amplitude(t + h) - v.amplitude(t - h)) / (2 * h)).epsilon(1e-6));
}
