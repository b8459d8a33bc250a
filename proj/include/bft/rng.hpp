#pragma once

#include <array>
#include <cstdint>

namespace bft {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A pure function of (counter, key): no internal state, so any element of
/// any stream can be produced independently of every other one. This is what
/// makes realizations bit-reproducible regardless of evaluation order.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) noexcept;
};

/// Purpose tags that keep the streams of different consumers disjoint.
enum class StreamTag : std::uint32_t {
    ExactSites = 1,
    GridNoise = 2,
    SeriesCoefficients = 3,
};

/// Standard normal variates addressed by (seed, realization, tag, index).
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t realization_index, StreamTag tag) noexcept;

    /// The i-th standard normal of this stream.
    double operator()(std::uint64_t index) const noexcept;

    /// Writes normals [first, first + count) into out; faster than repeated
    /// operator() because each Philox block yields two variates.
    void fill(std::uint64_t first, std::size_t count, double* out) const noexcept;

    /// Uniform in (0, 1) from the raw 64-bit word; exposed for tests.
    static double to_open_unit(std::uint64_t bits) noexcept;

private:
    std::array<double, 2> block(std::uint64_t block_index) const noexcept;

    Philox4x32::Key key_;
    std::uint32_t realization_lo_;
    std::uint32_t tag_word_;
};

}  // namespace bft
