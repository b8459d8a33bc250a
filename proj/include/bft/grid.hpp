#pragma once

#include "bft/core.hpp"

#include <array>
#include <cstddef>

namespace bft {

/// Periodic cubic lattice of n^3 sites, spacing h = L/n, site (i,j,k) at
/// origin + (i,j,k) h. Each site is the centre of its cell, so plain sums
/// times h^3 are the midpoint rule over the periodic cell.
///
/// Storage order is row-major with z fastest: index = (i*n + j)*n + k.
struct GridSpec {
    double side_length = 1.0;
    int resolution = 64;
    Vec3 origin = Vec3::Zero();

    /// n >= 8 and a power of two; L > 0 and finite.
    void validate() const;

    double spacing() const noexcept { return side_length / resolution; }
    double cell_volume() const noexcept {
        const double h = spacing();
        return h * h * h;
    }
    double volume() const noexcept { return side_length * side_length * side_length; }
    std::size_t site_count() const noexcept {
        const auto n = static_cast<std::size_t>(resolution);
        return n * n * n;
    }
    std::size_t index(int i, int j, int k) const noexcept {
        const auto n = static_cast<std::size_t>(resolution);
        return (static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)) * n + static_cast<std::size_t>(k);
    }
    std::array<int, 3> coords(std::size_t index) const noexcept {
        const auto n = static_cast<std::size_t>(resolution);
        return {static_cast<int>(index / (n * n)), static_cast<int>((index / n) % n), static_cast<int>(index % n)};
    }
    Vec3 site(std::size_t index) const noexcept {
        const auto c = coords(index);
        return origin + spacing() * Vec3(c[0], c[1], c[2]);
    }
    /// Signed integer wavenumber for FFT bin m: m for m <= n/2, m - n above.
    int signed_mode(int m) const noexcept { return m <= resolution / 2 ? m : m - resolution; }
    /// Physical wavenumber 2 pi * signed_mode(m) / L.
    double wavenumber(int m) const noexcept { return 2.0 * kPi * signed_mode(m) / side_length; }

    friend bool operator==(const GridSpec& a, const GridSpec& b) {
        return a.side_length == b.side_length && a.resolution == b.resolution && a.origin == b.origin;
    }
};

}  // namespace bft
