// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy trainer: plain gradient descent on the adapter with frozen synthetic
// experts. The objective regresses the token-mean of the projector output
// (first len(answer) coordinates) onto the sample's planted answer vector.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mova/adapter.hpp"
#include "mova/experts.hpp"
#include "mova/numerics.hpp"
#include "mova/selection.hpp"

namespace mova {

enum class TrainScope { gating, gating_extractor, full };

std::string to_string(TrainScope scope);
TrainScope train_scope_from_string(const std::string& s);
std::set<ParamScope> param_scopes(TrainScope scope);

/// Mean over tokens of the first target.size() output columns, scored by
/// mean squared error. Fills d_tokens with dLoss/dTokens when non-null.
double pooled_mse(const Matrix& tokens, const std::vector<double>& target, Matrix* d_tokens = nullptr);

/// One sample with its frozen features resolved.
struct PreparedSample {
    Sample sample;
    FeatureMap base;
    ExpertFeatures experts;
    TextToken text;
    ExpertSelection selection;
};

using SelectionPolicy = std::function<ExpertSelection(const Sample&)>;

PreparedSample prepare_sample(const ExpertRegistry& registry, const Sample& sample, const ExpertSelection& selection,
                              std::size_t text_dim);

/// Mean pooled_mse over samples; adds the gradient into grad when non-null.
double batch_loss(const AdapterParams& params, const AdapterConfig& config,
                  const std::vector<const PreparedSample*>& batch, AdapterParams* grad = nullptr);

struct GradCheckOptions {
    std::set<ParamScope> scopes;
    double eps = 1e-5;
    /// Coordinates probed per parameter tensor; 0 probes every coordinate.
    std::size_t max_per_tensor = 0;
    /// Skip extractor tensors of experts outside every sample's selection.
    bool routed_extractors_only = true;
};

/// Analytic gradients of batch_loss against central differences over the
/// chosen parameter scopes.
GradCheckReport check_adapter_gradients(const AdapterParams& params, const AdapterConfig& config,
                                        const std::vector<const PreparedSample*>& batch,
                                        const GradCheckOptions& options);

struct ToyTrainConfig {
    std::size_t steps = 500;
    double learning_rate = 0.05;
    /// 0 trains on the full training split each step.
    std::size_t batch_size = 0;
    std::uint64_t seed = 42;
    TrainScope scope = TrainScope::full;
    double eval_fraction = 0.25;
    double gradcheck_eps = 1e-5;
    double gradcheck_tol = 1e-4;
    std::size_t gradcheck_probes = 4;
    AdapterConfig adapter = desk_config();
};

struct ExpertGate {
    std::string expert;
    double mean_weight = 0.0;
};

struct TrainReport {
    std::vector<double> loss_trace;
    double eval_loss = 0.0;
    std::vector<ExpertGate> gate_means;
    GradCheckReport gradcheck;
    double wall_clock_seconds = 0.0;
    AdapterParams params;
};

/// Samples split into train (head) and eval (tail) by eval_fraction. The loss
/// trace holds, per step, the mean loss over a fixed monitor batch (the first
/// batch of the training split) before that step's update. Throws
/// TrainingError on a failed step-0 gradient check or a non-finite loss.
TrainReport train_toy(const ToyTrainConfig& config, const ExpertRegistry& registry, const std::vector<Sample>& samples,
                      const SelectionPolicy& policy);

/// Loss and per-expert gate means of fixed parameters over prepared samples.
struct EvalResult {
    double loss = 0.0;
    std::vector<double> gate_means;  // registry order
};

EvalResult evaluate(const AdapterParams& params, const AdapterConfig& config,
                    const std::vector<const PreparedSample*>& samples, std::size_t pool_size);

std::string train_report_to_json(const TrainReport& report, bool include_timing);

}  // namespace mova
