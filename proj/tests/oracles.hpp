#pragma once

// Independent reference computations used by the tests. Nothing here calls
// the library's closed forms; everything is rebuilt from eval_kernel, plain
// quadrature or brute-force enumeration.

#include "bft/core.hpp"
#include "bft/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

using bft::Mat3;
using bft::Vec3;

/// Richardson-extrapolated central difference of a scalar function of x
/// along each axis (steps h and h/2).
inline Vec3 fd_gradient(const std::function<double(const Vec3&)>& f, const Vec3& x, double h) {
    auto central = [&](int a, double step) {
        Vec3 e = Vec3::Zero();
        e(a) = step;
        return (f(x + e) - f(x - e)) / (2.0 * step);
    };
    Vec3 g;
    for (int a = 0; a < 3; ++a) g(a) = (4.0 * central(a, h / 2) - central(a, h)) / 3.0;
    return g;
}

/// Richardson-extrapolated mixed difference d^2 f(x, y) / dx_i dy_j.
inline Mat3 fd_cross(const std::function<double(const Vec3&, const Vec3&)>& f, const Vec3& x, const Vec3& y,
                     double h) {
    auto mixed = [&](int i, int j, double s) {
        Vec3 ei = Vec3::Zero(), ej = Vec3::Zero();
        ei(i) = s;
        ej(j) = s;
        return (f(x + ei, y + ej) - f(x + ei, y - ej) - f(x - ei, y + ej) + f(x - ei, y - ej)) / (4.0 * s * s);
    };
    Mat3 m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = (4.0 * mixed(i, j, h / 2) - mixed(i, j, h)) / 3.0;
    return m;
}

/// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
    if (panels % 2) ++panels;
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Inverse 3-D Fourier transform of an isotropic spectrum evaluated at
/// distance r: (2 pi^2 r)^-1 int S(k) k sin(k r) dk.
inline double radial_inverse_transform(const std::function<double(double)>& spectrum, double r, double k_max) {
    if (r == 0.0) {
        return simpson([&](double k) { return spectrum(k) * k * k; }, 0.0, k_max, 20000) / (2.0 * bft::kPi * bft::kPi);
    }
    return simpson([&](double k) { return spectrum(k) * k * std::sin(k * r); }, 0.0, k_max, 20000) /
           (2.0 * bft::kPi * bft::kPi * r);
}

/// Double factorial (m - 1)!! for even m; 0 for odd m. E[Z^m] of a standard normal.
inline double gaussian_moment(int m) {
    if (m % 2) return 0.0;
    double v = 1.0;
    for (int k = m - 1; k > 1; k -= 2) v *= k;
    return v;
}

/// E[(u + a B)^N] for B ~ N(0, c) by expanding the binomial term by term.
inline double shifted_gaussian_power(double u, double a, double c, int n) {
    double total = 0.0;
    double binom = 1.0;
    for (int m = 0; m <= n; ++m) {
        total += binom * std::pow(u, n - m) * std::pow(a, m) * std::pow(c, m / 2.0) * gaussian_moment(m);
        binom = binom * (n - m) / (m + 1);
    }
    return total;
}

/// Expectation of a product of zero-mean jointly Gaussian variables
/// (indices into cov) by brute-force enumeration of all pairings.
inline double isserlis(const std::vector<std::vector<double>>& cov, std::vector<int> idx) {
    if (idx.empty()) return 1.0;
    if (idx.size() % 2) return 0.0;
    const int first = idx[0];
    double total = 0.0;
    for (std::size_t k = 1; k < idx.size(); ++k) {
        std::vector<int> rest;
        for (std::size_t m = 1; m < idx.size(); ++m)
            if (m != k) rest.push_back(idx[m]);
        total += cov[first][idx[k]] * isserlis(cov, rest);
    }
    return total;
}

/// Periodised kernel sum over lattice images of the cell of side L.
inline double periodized_kernel(const bft::Kernel& kernel, const Vec3& r, double side, int images = 3) {
    double s = 0.0;
    for (int a = -images; a <= images; ++a)
        for (int b = -images; b <= images; ++b)
            for (int c = -images; c <= images; ++c)
                s += bft::eval_kernel(kernel, r + side * Vec3(a, b, c), Vec3::Zero());
    return s;
}

/// True when |value - expected| <= k * sigma (sigma may be zero).
inline bool within(double value, double expected, double sigma, double k = 4.0) {
    return std::abs(value - expected) <= k * sigma + 1e-300;
}

}  // namespace oracle
