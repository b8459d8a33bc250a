#include "bft/ensemble.hpp"
#include "bft/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace bft;

TEST_CASE("philox known-answer vectors") {
    using C = Philox4x32::Counter;
    using K = Philox4x32::Key;
    CHECK(Philox4x32::generate(C{0, 0, 0, 0}, K{0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(Philox4x32::generate(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}) ==
          C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(Philox4x32::generate(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}) ==
          C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("open-unit mapping never reaches the endpoints") {
    CHECK(NormalStream::to_open_unit(0) > 0.0);
    CHECK(NormalStream::to_open_unit(~std::uint64_t{0}) < 1.0);
}

TEST_CASE("fill agrees with indexed access for any offset") {
    const NormalStream s(42, 7, StreamTag::GridNoise);
    for (std::uint64_t first : {0ull, 1ull, 6ull, 13ull}) {
        std::vector<double> buf(11);
        s.fill(first, buf.size(), buf.data());
        for (std::size_t i = 0; i < buf.size(); ++i) CHECK(buf[i] == s(first + i));
    }
}

TEST_CASE("streams are keyed by seed, realization and tag") {
    const double base = NormalStream(1, 0, StreamTag::ExactSites)(0);
    CHECK(base == NormalStream(1, 0, StreamTag::ExactSites)(0));
    CHECK(base != NormalStream(2, 0, StreamTag::ExactSites)(0));
    CHECK(base != NormalStream(1, 1, StreamTag::ExactSites)(0));
    CHECK(base != NormalStream(1, 0, StreamTag::GridNoise)(0));
    CHECK(base != NormalStream(1, std::uint64_t{1} << 32, StreamTag::ExactSites)(0));
}

TEST_CASE("normal stream moments") {
    const NormalStream s(2024, 0, StreamTag::ExactSites);
    const std::size_t n = 200000;
    std::vector<double> z(n);
    s.fill(0, n, z.data());
    RunningStats st;
    for (double v : z) st.add(v);
    CHECK(std::abs(st.mean()) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(st.variance() - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(st.central_moment(3)) < 4.0 * std::sqrt(15.0 / n));
    CHECK(std::abs(st.central_moment(4) - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("running stats merge matches sequential accumulation") {
    const NormalStream s(5, 0, StreamTag::ExactSites);
    RunningStats all, a, b;
    for (int i = 0; i < 1000; ++i) {
        const double x = 3.0 + s(i);
        all.add(x);
        (i < 377 ? a : b).add(x);
    }
    a.merge(b);
    CHECK(a.count() == all.count());
    CHECK(a.mean() == doctest::Approx(all.mean()).epsilon(1e-13));
    CHECK(a.variance() == doctest::Approx(all.variance()).epsilon(1e-12));
    CHECK(a.central_moment(3) == doctest::Approx(all.central_moment(3)).epsilon(1e-9));
    CHECK(a.central_moment(4) == doctest::Approx(all.central_moment(4)).epsilon(1e-10));
}

TEST_CASE("ensemble reduction is independent of worker count") {
    auto run = [](unsigned workers) {
        return run_ensemble<RunningStats>(1000, workers, [] { return RunningStats{}; },
                                          [](std::uint64_t r, RunningStats& acc) {
                                              acc.add(NormalStream(9, r, StreamTag::ExactSites)(0));
                                          });
    };
    const auto one = run(1);
    for (unsigned w : {2u, 3u, 8u}) {
        const auto many = run(w);
        CHECK(many.count() == 1000);
        CHECK(many.mean() == one.mean());
        CHECK(many.variance() == one.variance());
    }
}

TEST_CASE("ensemble propagates exceptions from workers") {
    auto body = [](std::uint64_t r, RunningStats&) {
        if (r == 500) throw std::runtime_error("boom");
    };
    CHECK_THROWS_AS(run_ensemble<RunningStats>(1000, 3, [] { return RunningStats{}; }, body), std::runtime_error);
    CHECK_THROWS_AS(run_ensemble<RunningStats>(1000, 1, [] { return RunningStats{}; }, body), std::runtime_error);
}

TEST_CASE("field accumulator merge") {
    FieldAccumulator all(2), a(2), b(2);
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> v{double(i), double(i * i)};
        all.add(v);
        (i % 3 ? a : b).add(v);
    }
    a.merge(b);
    CHECK(a.mean(1) == doctest::Approx(all.mean(1)));
    CHECK(a.variance(0) == doctest::Approx(all.variance(0)));
    CHECK(a.std_error(1) == doctest::Approx(all.std_error(1)));
}
