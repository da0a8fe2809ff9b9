// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Executable invariant suite with fixed seeds, grouped by module.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mova/adapter.hpp"

namespace mova {

using GateFn = std::function<GateWeights(const GatingInput&, const ExpertSelection&, const GatingNetwork&, GatingMode)>;

struct PropertyOptions {
    std::uint64_t seed = 42;
    /// Gate implementation under test; replaced by fixtures to check that the
    /// gate-simplex group catches a broken normalisation.
    GateFn gate = gate_weights;
};

struct PropertyGroup {
    std::string name;
    std::size_t passed = 0;
    std::size_t failed = 0;
    std::vector<std::string> failures;  // first few, for diagnosis

    bool ok() const noexcept { return failed == 0; }
};

/// Groups: numerics, experts, gate-simplex, adapter, routing, routing-data,
/// harness.
std::vector<PropertyGroup> run_property_suite(const PropertyOptions& options = {});

bool all_passed(const std::vector<PropertyGroup>& groups);
std::string property_report_json(const std::vector<PropertyGroup>& groups);

}  // namespace mova
