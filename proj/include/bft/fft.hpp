#pragma once

#include "bft/grid.hpp"

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

namespace bft {

namespace detail {
struct FftwFree {
    void operator()(void* p) const noexcept;
};
}  // namespace detail

/// SIMD-aligned heap array suitable for any plan of the matching size.
template <class T>
class AlignedArray {
public:
    AlignedArray() = default;
    explicit AlignedArray(std::size_t size);

    T* data() noexcept { return data_.get(); }
    const T* data() const noexcept { return data_.get(); }
    std::size_t size() const noexcept { return size_; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

private:
    std::unique_ptr<T[], detail::FftwFree> data_;
    std::size_t size_ = 0;
};

using RealArray = AlignedArray<double>;
using ComplexArray = AlignedArray<std::complex<double>>;

/// Real-to-complex 3-D transforms on an n^3 periodic grid.
///
/// Plans are created once with FFTW_ESTIMATE (deterministic algorithm choice)
/// and executed through the new-array interface, which FFTW guarantees is
/// thread-safe. The half-spectrum layout is n x n x (n/2 + 1).
class Fft3d {
public:
    explicit Fft3d(int n);
    ~Fft3d();
    Fft3d(const Fft3d&) = delete;
    Fft3d& operator=(const Fft3d&) = delete;

    /// Shared, lazily built instance per resolution.
    static std::shared_ptr<const Fft3d> for_resolution(int n);

    int resolution() const noexcept { return n_; }
    std::size_t real_size() const noexcept { return real_size_; }
    std::size_t spectral_size() const noexcept { return spectral_size_; }
    int half_z() const noexcept { return n_ / 2 + 1; }

    RealArray make_real() const { return RealArray(real_size_); }
    ComplexArray make_spectral() const { return ComplexArray(spectral_size_); }

    /// Unnormalised forward transform; input is preserved.
    void forward(const double* in, std::complex<double>* out) const;
    /// Unnormalised inverse transform; the spectral input is overwritten.
    void inverse(std::complex<double>* in, double* out) const;

    std::size_t spectral_index(int i, int j, int k) const noexcept {
        return (static_cast<std::size_t>(i) * n_ + static_cast<std::size_t>(j)) * half_z() + static_cast<std::size_t>(k);
    }

private:
    int n_;
    std::size_t real_size_;
    std::size_t spectral_size_;
    void* forward_plan_ = nullptr;
    void* inverse_plan_ = nullptr;
};

/// Spectral operators on periodic grid fields. Odd-order derivative
/// multipliers vanish on Nyquist planes so real fields stay real.
class SpectralOps {
public:
    explicit SpectralOps(const GridSpec& grid);

    const GridSpec& grid() const noexcept { return grid_; }
    const Fft3d& fft() const noexcept { return *fft_; }

    /// Wavenumber along one axis for the half-spectrum index (axis 2 uses
    /// the k index in [0, n/2]).
    double k(int axis, int index) const noexcept { return axis == 2 ? kz_[index] : kxy_[index]; }
    /// First-derivative multiplier (zero at Nyquist).
    double kd(int axis, int index) const noexcept { return axis == 2 ? kz_d_[index] : kxy_d_[index]; }
    double k_squared(int i, int j, int k) const noexcept {
        return kxy_[i] * kxy_[i] + kxy_[j] * kxy_[j] + kz_[k] * kz_[k];
    }

    /// Spectrum of a real field (normalised so inverse() returns the field).
    void to_spectral(const double* field, std::complex<double>* spectrum) const;
    /// Real field from spectrum; the spectrum is left untouched.
    void to_physical(const std::complex<double>* spectrum, double* field) const;

    /// out = d/dx_axis of the field described by spectrum.
    void derivative(const std::complex<double>* spectrum, int axis, double* out) const;
    void laplacian(const std::complex<double>* spectrum, double* out) const;

    /// Visits every half-spectrum bin as f(index, i, j, k).
    template <class F>
    void for_each_mode(F&& f) const {
        const int n = grid_.resolution;
        const int hz = n / 2 + 1;
        std::size_t idx = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < hz; ++k) f(idx++, i, j, k);
    }

private:
    GridSpec grid_;
    std::shared_ptr<const Fft3d> fft_;
    std::vector<double> kxy_, kz_, kxy_d_, kz_d_;
};

}  // namespace bft
