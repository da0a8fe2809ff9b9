// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Ablation arms over the toy objective. Every arm trains from the same
// initial parameters on the same sample stream; only routing and the gating
// mode differ.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mova/experts.hpp"
#include "mova/routing_data.hpp"
#include "mova/trainer.hpp"

namespace mova {

enum class AblationKind { dynamic, random_routing, all_experts, uniform_gating, fixed_k };

struct AblationMode {
    AblationKind kind = AblationKind::dynamic;
    std::size_t k = 0;  // fixed_k only

    std::string name() const;
};

/// Parses dynamic | random-routing | all-experts | uniform-gating | fixed-K:k.
/// Throws ValidationError on anything else.
AblationMode parse_ablation_mode(const std::string& text);
std::vector<AblationMode> parse_ablation_modes(const std::string& comma_list);

struct AblationConfig {
    ToyTrainConfig train;
    std::size_t cap = kDefaultRoutingCap;
    std::uint64_t routing_seed = 0;
};

struct AblationEntry {
    std::string mode;
    double eval_loss = 0.0;
    double mean_selected = 0.0;
    std::vector<double> loss_trace;
    /// Chained hash of (sample_id, image_seed) in the order the arm consumed them.
    std::uint64_t stream_digest = 0;
};

/// Selection policy an arm uses for a sample (shared with tests).
ExpertSelection ablation_selection(const AblationMode& mode, const ExpertRegistry& registry, const Sample& sample,
                                   const LossRecord& losses, const AblationConfig& config);

/// One entry per requested mode, in request order.
std::vector<AblationEntry> run_ablation(const std::vector<AblationMode>& modes, const ExpertRegistry& registry,
                                        const SyntheticCorpus& corpus, const AblationConfig& config);

std::string ablation_to_json(const std::vector<AblationEntry>& entries);

}  // namespace mova
