#include "bft/rng.hpp"

#include <cmath>

namespace bft {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t realization_index, StreamTag tag) noexcept
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      realization_lo_(static_cast<std::uint32_t>(realization_index)),
      // High realization bits share the last counter word with the tag; 2^24
      // tags worth of headroom is far more than we use.
      tag_word_(static_cast<std::uint32_t>(tag) | (static_cast<std::uint32_t>(realization_index >> 32) << 8)) {}

double NormalStream::to_open_unit(std::uint64_t bits) noexcept {
    // 52 random bits mapped to the midpoints of 2^52 equal cells: never 0 or 1
    // (with 53 bits the top midpoint rounds up to 1.0).
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

std::array<double, 2> NormalStream::block(std::uint64_t block_index) const noexcept {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_index),
                                  static_cast<std::uint32_t>(block_index >> 32), realization_lo_, tag_word_};
    const auto r = Philox4x32::generate(ctr, key_);
    const double u1 = to_open_unit((static_cast<std::uint64_t>(r[0]) << 32) | r[1]);
    const double u2 = to_open_unit((static_cast<std::uint64_t>(r[2]) << 32) | r[3]);
    // Box-Muller
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

double NormalStream::operator()(std::uint64_t index) const noexcept {
    return block(index >> 1)[index & 1];
}

void NormalStream::fill(std::uint64_t first, std::size_t count, double* out) const noexcept {
    std::size_t written = 0;
    std::uint64_t index = first;
    if (count > 0 && (index & 1)) {
        out[written++] = (*this)(index++);
    }
    while (written + 1 < count) {
        const auto pair = block(index >> 1);
        out[written++] = pair[0];
        out[written++] = pair[1];
        index += 2;
    }
    if (written < count) {
        out[written] = (*this)(index);
    }
}

}  // namespace bft
