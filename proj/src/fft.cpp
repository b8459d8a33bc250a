#include "bft/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <new>
#include <string>

namespace bft {

namespace {

// FFTW's planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

void detail::FftwFree::operator()(void* p) const noexcept { fftw_free(p); }

template <class T>
AlignedArray<T>::AlignedArray(std::size_t size) : size_(size) {
    void* raw = fftw_malloc(sizeof(T) * (size == 0 ? 1 : size));
    if (!raw) throw std::bad_alloc();
    data_.reset(static_cast<T*>(raw));
    std::fill_n(data_.get(), size, T{});
}

template class AlignedArray<double>;
template class AlignedArray<std::complex<double>>;

void GridSpec::validate() const {
    if (!(std::isfinite(side_length) && side_length > 0.0)) {
        throw PreconditionError("grid: side length must be positive and finite");
    }
    if (resolution < 8 || (resolution & (resolution - 1)) != 0) {
        throw PreconditionError("grid: resolution must be a power of two >= 8, got " + std::to_string(resolution));
    }
    if (!origin.allFinite()) throw PreconditionError("grid: origin must be finite");
}

Fft3d::Fft3d(int n)
    : n_(n),
      real_size_(static_cast<std::size_t>(n) * n * n),
      spectral_size_(static_cast<std::size_t>(n) * n * (n / 2 + 1)) {
    RealArray r(real_size_);
    ComplexArray c(spectral_size_);
    auto* cc = reinterpret_cast<fftw_complex*>(c.data());
    std::lock_guard lock(planner_mutex());
    forward_plan_ = fftw_plan_dft_r2c_3d(n, n, n, r.data(), cc, FFTW_ESTIMATE);
    inverse_plan_ = fftw_plan_dft_c2r_3d(n, n, n, cc, r.data(), FFTW_ESTIMATE);
    if (!forward_plan_ || !inverse_plan_) throw Error("fft: plan creation failed");
}

Fft3d::~Fft3d() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
    fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

std::shared_ptr<const Fft3d> Fft3d::for_resolution(int n) {
    static std::mutex cache_mutex;
    static std::map<int, std::shared_ptr<const Fft3d>> cache;
    std::lock_guard lock(cache_mutex);
    auto& slot = cache[n];
    if (!slot) slot = std::make_shared<const Fft3d>(n);
    return slot;
}

void Fft3d::forward(const double* in, std::complex<double>* out) const {
    // r2c out-of-place never touches its input.
    fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), const_cast<double*>(in),
                         reinterpret_cast<fftw_complex*>(out));
}

void Fft3d::inverse(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_), reinterpret_cast<fftw_complex*>(in), out);
}

SpectralOps::SpectralOps(const GridSpec& grid) : grid_(grid) {
    grid_.validate();
    const int n = grid_.resolution;
    fft_ = Fft3d::for_resolution(n);
    kxy_.resize(n);
    kxy_d_.resize(n);
    for (int m = 0; m < n; ++m) {
        kxy_[m] = grid_.wavenumber(m);
        kxy_d_[m] = (m == n / 2) ? 0.0 : kxy_[m];
    }
    kz_.resize(n / 2 + 1);
    kz_d_.resize(n / 2 + 1);
    for (int m = 0; m <= n / 2; ++m) {
        kz_[m] = grid_.wavenumber(m);
        kz_d_[m] = (m == n / 2) ? 0.0 : kz_[m];
    }
}

void SpectralOps::to_spectral(const double* field, std::complex<double>* spectrum) const {
    fft_->forward(field, spectrum);
    const double scale = 1.0 / static_cast<double>(fft_->real_size());
    for (std::size_t i = 0; i < fft_->spectral_size(); ++i) spectrum[i] *= scale;
}

void SpectralOps::to_physical(const std::complex<double>* spectrum, double* field) const {
    ComplexArray scratch(fft_->spectral_size());
    std::copy_n(spectrum, fft_->spectral_size(), scratch.data());
    fft_->inverse(scratch.data(), field);
}

void SpectralOps::derivative(const std::complex<double>* spectrum, int axis, double* out) const {
    ComplexArray scratch(fft_->spectral_size());
    const std::complex<double> I(0.0, 1.0);
    for_each_mode([&](std::size_t idx, int i, int j, int k) {
        const int m = axis == 0 ? i : (axis == 1 ? j : k);
        scratch[idx] = I * kd(axis, m) * spectrum[idx];
    });
    fft_->inverse(scratch.data(), out);
}

void SpectralOps::laplacian(const std::complex<double>* spectrum, double* out) const {
    ComplexArray scratch(fft_->spectral_size());
    for_each_mode([&](std::size_t idx, int i, int j, int k) { scratch[idx] = -k_squared(i, j, k) * spectrum[idx]; });
    fft_->inverse(scratch.data(), out);
}

}  // namespace bft
