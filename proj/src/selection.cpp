// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/selection.hpp"

#include <algorithm>
#include <string>

#include "mova/errors.hpp"

namespace mova {

bool ExpertSelection::contains(std::size_t i) const noexcept {
    return std::find(indices.begin(), indices.end(), i) != indices.end();
}

void ExpertSelection::validate(std::size_t pool_size) const {
    if (indices.size() > pool_size) throw ValidationError("selection larger than the expert pool");
    std::vector<bool> seen(pool_size, false);
    for (auto i : indices) {
        if (i >= pool_size) {
            throw ValidationError("selection index " + std::to_string(i) + " outside pool of " +
                                  std::to_string(pool_size));
        }
        if (seen[i]) throw ValidationError("selection repeats index " + std::to_string(i));
        seen[i] = true;
    }
}

}  // namespace mova
