// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end coarse-to-fine run for one image and question: route, generate
// the base and routed expert features, fuse, and write the LLM tokens.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mova/adapter.hpp"
#include "mova/experts.hpp"
#include "mova/routing.hpp"

namespace mova {

struct PipelineRequest {
    std::string question;
    std::string sample_id = "query";
    std::uint64_t image_seed = 0;
    StrategyKind strategy = StrategyKind::scripted;
    RoutingContext context;
    /// Route an unusable (empty) response to the base-only path instead of
    /// failing.
    bool empty_response_fallback = false;
    AdapterConfig config = desk_config();
    /// Parameter directory from save_params; seeded init from config.seed when absent.
    std::optional<std::filesystem::path> params_dir;
    std::filesystem::path out_path;
};

struct PipelineResult {
    RoutingDecision decision;
    AdapterOutput output;
};

/// Errors from any component are rethrown as StageError tagged with one of
/// "routing", "params", "features", "adapter", "output".
PipelineResult run_pipeline(const ExpertRegistry& registry, const PipelineRequest& request);

/// {"decision":{...},"raw_response":..,"gates":[{"block":b,"weights":{name:w}}],"tokens":{"rows":..,"cols":..}}
std::string pipeline_summary_json(const PipelineResult& result, const ExpertRegistry& registry);

}  // namespace mova
