// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace mova {

/// Ordered subset G of registry indices; K = size().
struct ExpertSelection {
    std::vector<std::size_t> indices;

    std::size_t size() const noexcept { return indices.size(); }
    bool empty() const noexcept { return indices.empty(); }
    bool contains(std::size_t i) const noexcept;

    /// ValidationError on duplicates or indices >= pool_size.
    void validate(std::size_t pool_size) const;

    bool operator==(const ExpertSelection&) const = default;
};

}  // namespace mova
