// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace proceed
{

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a over bytes, then mixed. Stable across platforms and runs.
constexpr std::uint64_t hash_string(std::string_view s) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c: s)
    {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

constexpr std::uint64_t combine_keys(std::uint64_t a, std::uint64_t b) noexcept
{
    return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL));
}

/// Key for a per-slot stream: (run seed, task id, slot index).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view task_id, std::uint64_t slot) noexcept
{
    return combine_keys(combine_keys(seed, hash_string(task_id)), slot);
}

/// Counter-based stream: draw n is mix(key, n). The whole generator state is
/// the (key, position) pair, so copying it captures randomness exactly.
/// Distributions are implemented here rather than via <random> so results
/// are bit-identical across standard libraries.
class CounterRng
{
public:
    constexpr CounterRng() noexcept = default;
    constexpr explicit CounterRng(std::uint64_t key, std::uint64_t position = 0) noexcept:
        _key(key), _position(position)
    {
    }

    constexpr std::uint64_t next_u64() noexcept { return combine_keys(_key, _position++); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    constexpr double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be > 0.
    constexpr std::uint64_t below(std::uint64_t n) noexcept
    {
        // Multiply-shift; bias is < n / 2^64 and irrelevant at our sizes.
        __extension__ using u128 = unsigned __int128;
        return static_cast<std::uint64_t>((static_cast<u128>(next_u64()) * n) >> 64);
    }

    constexpr bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Approximately standard normal (Box-Muller, one value per two draws).
    double normal() noexcept;

    /// Independent child stream, keyed by a label.
    [[nodiscard]] constexpr CounterRng split(std::string_view label) const noexcept
    {
        return CounterRng(combine_keys(_key, hash_string(label)));
    }

    [[nodiscard]] constexpr std::uint64_t key() const noexcept { return _key; }
    [[nodiscard]] constexpr std::uint64_t position() const noexcept { return _position; }
    constexpr void set_position(std::uint64_t position) noexcept { _position = position; }

    friend constexpr bool operator==(const CounterRng&, const CounterRng&) = default;

private:
    std::uint64_t _key = 0;
    std::uint64_t _position = 0;
};

} // namespace proceed
