// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace proceed
{

/// The enumerable decision faced by a policy at one state: candidate action
/// strings and a row-major (candidates x dim) feature matrix.
struct DecisionContext
{
    std::vector<std::string> candidates;
    std::vector<double> features;
    std::size_t dim = 0;

    [[nodiscard]] std::size_t size() const noexcept { return candidates.size(); }

    [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept
    {
        return {features.data() + i * dim, dim};
    }

    [[nodiscard]] std::span<double> row(std::size_t i) noexcept { return {features.data() + i * dim, dim}; }

    /// Index of `action` among candidates, or size() if absent.
    [[nodiscard]] std::size_t index_of(std::string_view action) const noexcept;
};

} // namespace proceed
