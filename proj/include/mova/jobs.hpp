// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Job descriptions shared by the CLI and the acceptance harness: where the
// corpus comes from, which experts each sample routes to, and the trainer
// settings.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mova/ablation.hpp"
#include "mova/experts.hpp"
#include "mova/routing_data.hpp"
#include "mova/trainer.hpp"

namespace mova {

/// toy.json:
///   {"steps":500, "learning_rate":0.05, "batch_size":8, "seed":42,
///    "scope":"full", "eval_fraction":0.25, "gradcheck_eps":1e-5,
///    "gradcheck_tol":1e-4, "gradcheck_probes":4, "adapter":{...},
///    "corpus":"dir with samples.jsonl + losses.jsonl"            (or)
///    "synthetic":{"samples":40, "seed":42, "noise":0, "planted":"pix2struct"},
///    "selection":["dinov2","pix2struct"]   (omit for oracle routing),
///    "cap":3, "routing_seed":42}
/// Relative corpus paths resolve against the job file's directory.
struct ToyJob {
    ToyTrainConfig train;
    std::optional<std::filesystem::path> corpus;
    SyntheticOptions synthetic;
    std::optional<std::vector<std::string>> selection;
    std::size_t cap = kDefaultRoutingCap;
    std::uint64_t routing_seed = 42;
};

/// Planted-concentration job: every sample planted in pix2struct, selection
/// fixed to {dinov2, pix2struct}, 40 samples, 500 steps, seed 42.
ToyJob concentration_job();

/// Ablation job: 120 samples with random planting, noise 0.1, 300 steps,
/// seed 42.
ToyJob ablation_job();

/// Unknown keys are rejected. Missing keys keep the values of `defaults`.
ToyJob toy_job_from_json(const std::string& text, const std::filesystem::path& base_dir, const ToyJob& defaults);
ToyJob load_toy_job(const std::filesystem::path& path, const ToyJob& defaults);

/// Loads or generates the job's corpus.
SyntheticCorpus resolve_corpus(const ToyJob& job, const ExpertRegistry& registry);

TrainReport run_toy_job(const ToyJob& job, const ExpertRegistry& registry);
std::vector<AblationEntry> run_ablation_job(const ToyJob& job, const std::vector<AblationMode>& modes,
                                            const ExpertRegistry& registry);

/// Finite-difference check of the gating MLP, the routed extractors
/// ({dinov2, pix2struct}) and the projector on the desk config.
/// max_per_tensor 0 probes every coordinate.
GradCheckReport desk_gradcheck(double eps, std::uint64_t seed, std::size_t max_per_tensor = 0);

}  // namespace mova
