#include "bft/kernels.hpp"
#include "bft/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <vector>

using namespace bft;

namespace {

// Uniform variates in [lo, hi) from a dedicated stream.
struct Uniform {
    NormalStream s;
    std::uint64_t i = 0;
    explicit Uniform(std::uint64_t seed) : s(seed, 0, StreamTag::ExactSites) {}
    double operator()(double lo, double hi) {
        const double z = s(i++);
        return lo + (hi - lo) * 0.5 * std::erfc(-z / std::sqrt(2.0));
    }
    Vec3 vec(double lo, double hi) {
        const double a = (*this)(lo, hi), b = (*this)(lo, hi), c = (*this)(lo, hi);
        return Vec3(a, b, c);
    }
};

}  // namespace

TEST_CASE("kernel values") {
    CHECK(eval_kernel({1, 1, 2}, Vec3(0.3, -1, 2), Vec3(0.3, -1, 2)) == 1.0);
    CHECK(eval_kernel({1, 1, 2}, Vec3::Zero(), Vec3(1, 0, 0)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(eval_kernel({2, 0.5, 1}, Vec3::Zero(), Vec3(0, 0.5, 0)) == doctest::Approx(2 * std::exp(-1.0)).epsilon(1e-15));
    // past the clamp the value is exactly zero
    CHECK(eval_kernel({1, 1, 2}, Vec3::Zero(), Vec3(27, 0, 0)) == 0.0);
    CHECK(eval_kernel({1, 1, 2}, Vec3::Zero(), Vec3(26, 0, 0)) > 0.0);
}

TEST_CASE("invalid kernels are rejected") {
    CHECK_THROWS_AS(Kernel({0, 1, 2}).validate(), PreconditionError);
    CHECK_THROWS_AS(Kernel({1, -1, 2}).validate(), PreconditionError);
    CHECK_THROWS_AS(Kernel({1, 1, 0}).validate(), PreconditionError);
    CHECK_THROWS_AS(eval_kernel_grad({1, 1, 1.5}, Vec3::Zero(), Vec3::Ones()), DifferentiabilityError);
    CHECK_THROWS_AS(eval_kernel_cross_hessian({1, 1, 1}, Vec3::Zero(), Vec3::Ones()), DifferentiabilityError);
    CHECK_THROWS_AS(spectral_density({1, 1, 3}, Vec3::Zero()), DifferentiabilityError);
}

TEST_CASE("symmetry and shift invariance") {
    Uniform u(11);
    for (int t = 0; t < 10000; ++t) {
        const Kernel k{u(0.1, 5), u(0.1, 10), u(0.5, 2)};
        const Vec3 x = u.vec(-5, 5), y = u.vec(-5, 5), l = u.vec(-5, 5);
        const double v = eval_kernel(k, x, y);
        REQUIRE(v == eval_kernel(k, y, x));
        REQUIRE(std::abs(eval_kernel(k, x + l, y + l) - v) <= 1e-14 * k.amplitude);
    }
}

TEST_CASE("gradient examples") {
    CHECK(eval_kernel_grad({1, 1, 2}, Vec3(1, 2, 3), Vec3(1, 2, 3)) == Vec3::Zero());
    const Vec3 g = eval_kernel_grad({1, 1, 2}, Vec3(0.5, 0, 0), Vec3::Zero());
    CHECK(g(0) == doctest::Approx(-0.77880078307).epsilon(1e-10));
    const Vec3 g2 = eval_kernel_grad({3, 2, 2}, Vec3(0, 1, 0), Vec3::Zero());
    CHECK(g2(1) == doctest::Approx(-1.16820117).epsilon(1e-8));
    CHECK(g2(0) == 0.0);
}

TEST_CASE("cross hessian examples") {
    const Mat3 h0 = eval_kernel_cross_hessian({1, 1, 2}, Vec3::Ones(), Vec3::Ones());
    CHECK((h0 - 2.0 * Mat3::Identity()).norm() < 1e-15);
    const Mat3 h1 = eval_kernel_cross_hessian({1, 1, 2}, Vec3(1, 0, 0), Vec3::Zero());
    CHECK(h1(0, 0) == doctest::Approx(-2 * std::exp(-1.0)).epsilon(1e-14));
    CHECK(h1(0, 1) == 0.0);
    const Mat3 flat = eval_kernel_cross_hessian({1, 1e6, 2}, Vec3(1, 0, 0), Vec3::Zero());
    CHECK(flat.cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("derivatives agree with extrapolated finite differences") {
    Uniform u(12);
    double worst_grad = 0.0, worst_hess = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const Kernel k{u(0.2, 5), u(0.1, 10), 2.0};
        const Vec3 x = u.vec(-1, 1) * k.corr_length;
        const Vec3 y = u.vec(-1, 1) * k.corr_length;
        auto f = [&](const Vec3& a) { return eval_kernel(k, a, y); };
        auto f2 = [&](const Vec3& a, const Vec3& b) { return eval_kernel(k, a, b); };
        const Vec3 g = eval_kernel_grad(k, x, y);
        const Vec3 gfd = oracle::fd_gradient(f, x, 1e-3 * k.corr_length);
        worst_grad = std::max(worst_grad, (g - gfd).norm() / std::max(g.norm(), 1e-3 * k.amplitude / k.corr_length));
        const Mat3 h = eval_kernel_cross_hessian(k, x, y);
        const Mat3 hfd = oracle::fd_cross(f2, x, y, 1e-2 * k.corr_length);
        const double scale = k.amplitude / (k.corr_length * k.corr_length);
        worst_hess = std::max(worst_hess, (h - hfd).norm() / std::max(h.norm(), 1e-3 * scale));
    }
    CHECK(worst_grad < 1e-6);
    CHECK(worst_hess < 1e-6);
}

TEST_CASE("spectral density normalisation and decay") {
    CHECK(spectral_density({1, 1, 2}, Vec3::Zero()) == doctest::Approx(std::pow(kPi, 1.5)).epsilon(1e-14));
    const Kernel k{1, 1, 2};
    double prev = spectral_density(k, Vec3::Zero());
    for (double kk = 0.5; kk < 50; kk += 0.5) {
        const double s = spectral_density_radial(k, kk);
        CHECK(s < prev);
        prev = s;
    }
    CHECK(prev < 1e-200);
}

TEST_CASE("spectral density round-trips through the radial inverse transform") {
    for (const Kernel k : {Kernel{1, 1, 2}, Kernel{2.5, 0.3, 2}}) {
        const double kmax = 14.0 / k.corr_length;
        auto s = [&](double kn) { return spectral_density_radial(k, kn); };
        for (int i = 0; i < 20; ++i) {
            const double r = 4.0 * k.corr_length * i / 19.0;
            const double back = oracle::radial_inverse_transform(s, r, kmax);
            const double direct = eval_kernel(k, Vec3(r, 0, 0), Vec3::Zero());
            CHECK(std::abs(back - direct) <= 1e-6 * direct);
        }
    }
}

TEST_CASE("kernel matrix structure") {
    const Kernel k{1, 1, 2};
    const std::vector<Vec3> one{Vec3(1, 2, 3)};
    const auto m1 = kernel_matrix(k, one);
    CHECK(m1.entries.rows() == 1);
    CHECK(m1.entries(0, 0) == 1.0);

    const std::vector<Vec3> two{Vec3::Zero(), Vec3(0, 0, 1)};
    const auto m2 = kernel_matrix(k, two);
    CHECK(m2.entries(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(m2.entries(1, 0) == m2.entries(0, 1));
    CHECK(m2.jitter == 0.0);

    CHECK_THROWS_AS(kernel_matrix(k, std::vector<Vec3>{}), PreconditionError);
}

TEST_CASE("cube corner matrix has the separable smallest eigenvalue") {
    // The corner matrix is a Kronecker cube of [[1, q], [q, 1]], q = exp(-1/lambda^2),
    // whose eigenvalues are products of (1 +- q).
    std::vector<Vec3> corners;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) corners.emplace_back(a, b, c);
    const auto m = kernel_matrix({1, 0.5, 2}, corners);
    const double q = std::exp(-4.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.entries);
    CHECK(eig.eigenvalues()(0) > 0.0);
    CHECK(eig.eigenvalues()(0) == doctest::Approx(std::pow(1 - q, 3)).epsilon(1e-12));
    CHECK(m.min_eigenvalue == doctest::Approx(std::pow(1 - q, 3)).epsilon(1e-12));
}

TEST_CASE("random kernel matrices are positive semidefinite") {
    Uniform u(13);
    for (int t = 0; t < 100; ++t) {
        const int n = 1 + static_cast<int>(u(0, 64));
        std::vector<Vec3> pts;
        for (int i = 0; i < n; ++i) pts.push_back(u.vec(0, 1));
        const Kernel k{u(0.5, 2), u(0.05, 0.5), 2.0};
        const auto m = kernel_matrix(k, pts);
        CHECK(m.min_eigenvalue >= -1e-10 * k.amplitude);
    }
}

TEST_CASE("coincident points stay within the jitter budget") {
    const std::vector<Vec3> pts{Vec3::Zero(), Vec3::Zero(), Vec3(0.1, 0, 0)};
    const auto m = kernel_matrix({1, 1, 2}, pts);
    CHECK(m.min_eigenvalue >= -1e-10);
    CHECK(m.jitter <= 1e-10);
}

TEST_CASE("fourth-order kernel derivatives against differences of lower orders") {
    Uniform u(14);
    for (int t = 0; t < 200; ++t) {
        const Kernel k{u(0.2, 3), u(0.1, 5), 2.0};
        const Vec3 x = u.vec(-1, 1) * k.corr_length;
        const Vec3 y = u.vec(-1, 1) * k.corr_length;
        const double h = 1e-2 * k.corr_length;
        const double s = 1.0 / (k.corr_length * k.corr_length);
        // Laplacian in x as the trace of a Hessian built from the analytic gradient.
        double lap = 0.0;
        for (int a = 0; a < 3; ++a) {
            auto ga = [&](const Vec3& p) { return eval_kernel_grad(k, p, y)(a); };
            lap += oracle::fd_gradient(ga, x, h)(a);
        }
        CHECK(eval_kernel_laplacian(k, x, y) == doctest::Approx(lap).epsilon(1e-6).scale(k.amplitude * s));
        // x-gradient of the y-Laplacian
        auto lap_y = [&](const Vec3& p) { return eval_kernel_laplacian(k, p, y); };
        const Vec3 lg = oracle::fd_gradient(lap_y, x, h);
        CHECK((eval_kernel_laplacian_grad(k, x, y) - lg).norm() <= 1e-6 * k.amplitude * s * s * k.corr_length);
        // Laplacian of that gradient field
        double bl = 0.0;
        for (int a = 0; a < 3; ++a) {
            auto ga = [&](const Vec3& p) { return eval_kernel_laplacian_grad(k, p, y)(a); };
            bl += oracle::fd_gradient(ga, x, h)(a);
        }
        CHECK(eval_kernel_bilaplacian(k, x, y) == doctest::Approx(bl).epsilon(1e-6).scale(k.amplitude * s * s));
    }
    CHECK(eval_kernel_bilaplacian({1, 1, 2}, Vec3::Zero(), Vec3::Zero()) == 60.0);
    CHECK(eval_kernel_laplacian({1, 1, 2}, Vec3::Zero(), Vec3::Zero()) == -6.0);
}
