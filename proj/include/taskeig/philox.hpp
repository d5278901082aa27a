//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_PHILOX_HPP
#define TASKEIG_PHILOX_HPP

#include <array>
#include <cstdint>

namespace taskeig {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Chosen so
/// that generated test problems are reproducible bit-for-bit across
/// platforms and implementations; the known-answer vectors from the
/// reference distribution are checked in the test suite.
class Philox {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter round10(Counter ctr, Key key) {
        for (int r = 0; r < 10; ++r) {
            ctr = single_round(ctr, key);
            key[0] += 0x9E3779B9u; // golden ratio Weyl constants
            key[1] += 0xBB67AE85u;
        }
        return ctr;
    }

    /// Stream interface: fixed 64-bit seed key, 64-bit block counter.
    explicit Philox(std::uint64_t seed) : key_{static_cast<std::uint32_t>(seed),
                                               static_cast<std::uint32_t>(seed >> 32)} {}

    /// Generates the 128-bit block for counter `n` (stateless per call).
    Counter block(std::uint64_t n) const {
        Counter ctr{static_cast<std::uint32_t>(n),
                    static_cast<std::uint32_t>(n >> 32), 0u, 0u};
        return round10(ctr, key_);
    }

    std::uint64_t next_u64() {
        if (have_ == 0) {
            buf_ = block(counter_++);
            have_ = 2;
        }
        const int i = 2 - have_;
        --have_;
        return (static_cast<std::uint64_t>(buf_[2 * i + 1]) << 32) | buf_[2 * i];
    }

    /// Uniform double in [-1, 1] with 53 significant bits.
    double uniform_sym() {
        const std::uint64_t u = next_u64() >> 11; // 53 bits
        return static_cast<double>(u) * (2.0 / 9007199254740992.0) - 1.0;
    }

    /// Uniform double in [0, 1).
    double uniform01() {
        const std::uint64_t u = next_u64() >> 11;
        return static_cast<double>(u) * (1.0 / 9007199254740992.0);
    }

    /// Uniform integer in [0, n).
    std::uint64_t bounded(std::uint64_t n) { return next_u64() % n; }

private:
    static Counter single_round(const Counter& ctr, const Key& key) {
        const std::uint64_t p0 = 0xD2511F53ull * ctr[0];
        const std::uint64_t p1 = 0xCD9E8D57ull * ctr[2];
        return Counter{
            static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
            static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
            static_cast<std::uint32_t>(p0),
        };
    }

    Key key_{};
    std::uint64_t counter_ = 0;
    Counter buf_{};
    int have_ = 0;
};

} // namespace taskeig

#endif
