#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

namespace bft {

/// Streaming scalar moments (count, mean, central sums M2..M4) with the
/// pairwise merge rules of Chan et al. and Pebay. Merging is associative in
/// exact arithmetic; bit-reproducibility comes from a fixed merge order.
class RunningStats {
public:
    void add(double x) noexcept {
        RunningStats one;
        one.n_ = 1;
        one.mean_ = x;
        merge(one);
    }

    void merge(const RunningStats& b) noexcept {
        if (b.n_ == 0) return;
        if (n_ == 0) {
            *this = b;
            return;
        }
        const double na = static_cast<double>(n_), nb = static_cast<double>(b.n_);
        const double n = na + nb;
        const double d = b.mean_ - mean_;
        const double d2 = d * d;
        const double m2 = m2_ + b.m2_ + d2 * na * nb / n;
        const double m3 = m3_ + b.m3_ + d2 * d * na * nb * (na - nb) / (n * n) +
                          3.0 * d * (na * b.m2_ - nb * m2_) / n;
        const double m4 = m4_ + b.m4_ + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                          6.0 * d2 * (na * na * b.m2_ + nb * nb * m2_) / (n * n) +
                          4.0 * d * (na * b.m3_ - nb * m3_) / n;
        mean_ += d * nb / n;
        m2_ = m2;
        m3_ = m3;
        m4_ = m4;
        n_ += b.n_;
    }

    std::uint64_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    /// Unbiased sample variance.
    double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double std_dev() const noexcept { return std::sqrt(variance()); }
    /// Standard error of the mean.
    double std_error() const noexcept { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }
    /// Large-sample standard error of variance(): sqrt((m4 - s^4) / n).
    double variance_std_error() const noexcept {
        if (n_ < 2) return 0.0;
        const double n = static_cast<double>(n_);
        const double s2 = variance();
        return std::sqrt(std::max(0.0, m4_ / n - s2 * s2) / n);
    }
    double central_moment(int order) const noexcept {
        const double n = static_cast<double>(n_);
        switch (order) {
        case 2: return m2_ / n;
        case 3: return m3_ / n;
        case 4: return m4_ / n;
        default: return 0.0;
        }
    }

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0, m2_ = 0.0, m3_ = 0.0, m4_ = 0.0;
};

/// Welford mean/variance for a fixed-length vector of statistics
/// (e.g. every component at every site of a field).
class FieldAccumulator {
public:
    FieldAccumulator() = default;
    explicit FieldAccumulator(std::size_t width) : mean_(width, 0.0), m2_(width, 0.0) {}

    std::size_t width() const noexcept { return mean_.size(); }
    std::uint64_t count() const noexcept { return n_; }

    /// Adds one sample; sample must have width() entries.
    template <class Range>
    void add(const Range& sample) {
        ++n_;
        const double inv_n = 1.0 / static_cast<double>(n_);
        std::size_t i = 0;
        for (double x : sample) {
            const double d = x - mean_[i];
            mean_[i] += d * inv_n;
            m2_[i] += d * (x - mean_[i]);
            ++i;
        }
    }

    void merge(const FieldAccumulator& b) {
        if (b.n_ == 0) return;
        if (n_ == 0) {
            *this = b;
            return;
        }
        const double na = static_cast<double>(n_), nb = static_cast<double>(b.n_);
        const double n = na + nb;
        for (std::size_t i = 0; i < mean_.size(); ++i) {
            const double d = b.mean_[i] - mean_[i];
            mean_[i] += d * nb / n;
            m2_[i] += b.m2_[i] + d * d * na * nb / n;
        }
        n_ += b.n_;
    }

    double mean(std::size_t i) const noexcept { return mean_[i]; }
    double variance(std::size_t i) const noexcept { return n_ > 1 ? m2_[i] / static_cast<double>(n_ - 1) : 0.0; }
    double std_error(std::size_t i) const noexcept {
        return n_ > 0 ? std::sqrt(variance(i) / static_cast<double>(n_)) : 0.0;
    }
    const std::vector<double>& means() const noexcept { return mean_; }

private:
    std::uint64_t n_ = 0;
    std::vector<double> mean_, m2_;
};

/// Realizations per reduction block. Part of the reproducibility contract:
/// changing it changes output bits.
inline constexpr std::uint64_t kEnsembleBlock = 64;

/// Runs body(worker_state, index, block_accumulator) for index in [0, size),
/// grouped into fixed blocks of kEnsembleBlock consecutive indices. Each block
/// is accumulated sequentially and blocks are merged strictly in block order,
/// so the result is bit-identical for any worker count.
template <class Acc, class MakeAcc, class MakeState, class Body>
Acc run_ensemble(std::uint64_t size, unsigned workers, MakeAcc make_acc, MakeState make_state, Body body) {
    const std::uint64_t blocks = (size + kEnsembleBlock - 1) / kEnsembleBlock;
    Acc total = make_acc();
    auto run_block = [&](auto& state, std::uint64_t b) {
        Acc acc = make_acc();
        const std::uint64_t end = std::min(size, (b + 1) * kEnsembleBlock);
        for (std::uint64_t i = b * kEnsembleBlock; i < end; ++i) body(state, i, acc);
        return acc;
    };

    if (workers <= 1 || blocks <= 1) {
        auto state = make_state();
        for (std::uint64_t b = 0; b < blocks; ++b) total.merge(run_block(state, b));
        return total;
    }

    std::atomic<std::uint64_t> next{0};
    std::mutex merge_mutex;
    std::map<std::uint64_t, Acc> pending;
    std::uint64_t next_to_merge = 0;
    std::exception_ptr failure;

    auto worker = [&] {
        try {
            auto state = make_state();
            for (std::uint64_t b = next++; b < blocks; b = next++) {
                Acc acc = run_block(state, b);
                std::lock_guard lock(merge_mutex);
                pending.emplace(b, std::move(acc));
                for (auto it = pending.find(next_to_merge); it != pending.end();
                     it = pending.find(next_to_merge)) {
                    total.merge(it->second);
                    pending.erase(it);
                    ++next_to_merge;
                }
            }
        } catch (...) {
            std::lock_guard lock(merge_mutex);
            if (!failure) failure = std::current_exception();
            next = blocks;
        }
    };

    const unsigned count = static_cast<unsigned>(std::min<std::uint64_t>(workers, blocks));
    std::vector<std::thread> threads;
    threads.reserve(count);
    for (unsigned t = 0; t < count; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
    return total;
}

/// Convenience overload when the body needs no per-worker scratch state.
template <class Acc, class MakeAcc, class Body>
Acc run_ensemble(std::uint64_t size, unsigned workers, MakeAcc make_acc, Body body) {
    struct NoState {};
    return run_ensemble<Acc>(
        size, workers, make_acc, [] { return NoState{}; },
        [&](NoState&, std::uint64_t i, Acc& acc) { body(i, acc); });
}

}  // namespace bft
