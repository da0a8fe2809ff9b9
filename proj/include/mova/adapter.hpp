// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fine-grained expert fusion adapter. Each of the L blocks runs
//   1. one cross-attention extractor per routed expert: Y_j = X + Attn(X, interp(F_j)),
//   2. a gating MLP over [avgpool(X), text token], softmaxed over the routed subset,
//   3. the weighted sum of the Y_j followed by a post-norm transformer block.
// Two residual MLP blocks and a single 2x average pool then reduce the tokens,
// and a two-layer projector maps them to the LLM width.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mova/experts.hpp"
#include "mova/layers.hpp"
#include "mova/numerics.hpp"
#include "mova/selection.hpp"
#include "mova/text_encoder.hpp"

namespace mova {

enum class GatingMode { dynamic, uniform };

std::string to_string(GatingMode mode);
GatingMode gating_mode_from_string(const std::string& s);

struct AdapterConfig {
    std::size_t num_blocks = 3;
    std::size_t hidden_dim = 8;
    std::size_t text_dim = 8;
    std::size_t gating_hidden = 16;
    std::size_t ffn_expansion = 4;
    std::size_t heads = 1;
    std::size_t llm_dim = 32;
    GatingMode gating_mode = GatingMode::dynamic;
    std::uint64_t seed = 0;

    /// ValidationError on zero extents or heads not dividing hidden_dim.
    void validate() const;

    bool operator==(const AdapterConfig&) const = default;
};

/// Desk-scale defaults: L=3, C=8, C_T=8, D_llm=32.
AdapterConfig desk_config();

std::string config_to_json(const AdapterConfig& config);
AdapterConfig config_from_json(const std::string& text);
AdapterConfig load_config(const std::filesystem::path& path);

struct GatingInput {
    std::vector<double> visual_token;
    TextToken text_token;
};

/// Simplex weights over the selected experts, in selection order.
struct GateWeights {
    std::vector<double> weights;
};

struct GatingNetwork {
    Linear hidden;  // (C + C_T) -> gating_hidden
    Linear logits;  // gating_hidden -> N
};

struct TransformerWeights {
    Attention attention;
    LayerNorm norm1;
    Linear ffn_in;
    Linear ffn_out;
    LayerNorm norm2;
};

struct AdapterBlock {
    std::vector<Attention> extractors;  // one per pool expert, routed or not
    GatingNetwork gating;
    TransformerWeights transformer;
};

struct ResidualMlp {
    Linear fc1;
    Linear fc2;
};

struct AdapterParams {
    std::vector<AdapterBlock> blocks;
    std::array<ResidualMlp, 2> reduction;
    Linear projector_in;
    Linear projector_out;
};

enum class ParamScope { gating, extractor, transformer, reduction, projector };

std::string to_string(ParamScope scope);

struct ParamRef {
    std::string name;
    ParamScope scope;
    Matrix* value;
};

struct ConstParamRef {
    std::string name;
    ParamScope scope;
    const Matrix* value;
};

/// Every parameter matrix in a fixed traversal order.
std::vector<ParamRef> param_refs(AdapterParams& params);
std::vector<ConstParamRef> param_refs(const AdapterParams& params);

std::size_t param_count(const AdapterParams& params);
AdapterParams zeros_like(const AdapterParams& params);

/// Seeded init: weights ~ N(0, 1/fan_in), biases 0, norm scale 1 / offset 0.
AdapterParams init_params(const AdapterConfig& config, const ExpertRegistry& registry, std::uint64_t seed);

/// Directory of MOVT files plus manifest.json mapping name -> file.
void save_params(const AdapterParams& params, const std::filesystem::path& dir);
/// Loads into a structure shaped like `shape` (from init_params); every name
/// must be present with matching dims.
AdapterParams load_params(const std::filesystem::path& dir, const AdapterParams& shape);

// ---------------------------------------------------------------- operations

/// Y = x + out_proj(Attn(q(x), k(F^), v(F^))) with F^ the expert feature
/// resized to x's spatial extent.
FeatureMap extract_expert_knowledge(const FeatureMap& x, const FeatureMap& expert_feature, const Attention& params,
                                    std::size_t heads = 1);

/// Pre-softmax logits of the gating MLP for all N pool experts.
std::vector<double> gating_logits(const GatingInput& input, const GatingNetwork& params);

GateWeights gate_weights(const GatingInput& input, const ExpertSelection& selection, const GatingNetwork& params,
                         GatingMode mode);

FeatureMap fuse(const std::vector<FeatureMap>& conditional, const GateWeights& weights);

/// Post-norm block: x <- norm1(x + attn(x)); x <- norm2(x + ffn(x)).
/// With normalize=false the two norms are skipped (identity).
FeatureMap transformer_block(const FeatureMap& x, const TransformerWeights& params, std::size_t heads = 1,
                             bool normalize = true);

using ExpertFeatures = std::map<std::size_t, FeatureMap>;

struct AdapterTrace;

struct AdapterOutput {
    Matrix tokens;                   // (H/2 * W/2) x llm_dim
    std::vector<GateWeights> gates;  // one per block; empty weights on the base-only path
};

/// Runs the full stack. An empty selection skips extraction and gating in
/// every block. Throws RoutingError(feature_mismatch) when a routed expert has
/// no feature.
AdapterOutput adapter_forward(const FeatureMap& base, const ExpertFeatures& expert_features,
                              const ExpertSelection& selection, const std::string& question,
                              const AdapterParams& params, const AdapterConfig& config);

AdapterOutput adapter_forward(const FeatureMap& base, const ExpertFeatures& expert_features,
                              const ExpertSelection& selection, const TextToken& text_token,
                              const AdapterParams& params, const AdapterConfig& config,
                              AdapterTrace* trace = nullptr);

/// Reverse pass for a traced forward. Adds parameter gradients into `grad`.
void adapter_backward(const AdapterTrace& trace, const AdapterParams& params, const AdapterConfig& config,
                      const Matrix& d_tokens, AdapterParams& grad);

// ---------------------------------------------------------------- trace

struct GatingTrace {
    Matrix input;  // 1 x (C + C_T)
    Matrix pre;    // 1 x gating_hidden
    Matrix hidden;
    std::vector<double> weights;
};

struct TransformerTrace {
    AttentionCache attention;
    LayerNormCache norm1;
    Matrix x1;
    Matrix ffn_pre;
    Matrix ffn_act;
    LayerNormCache norm2;
};

struct BlockTrace {
    Matrix input;                          // X^i tokens
    std::vector<AttentionCache> extract;   // per selected expert
    std::vector<Matrix> conditional;       // Y_j tokens per selected expert
    GatingTrace gating;
    TransformerTrace transformer;
};

struct ResidualTrace {
    Matrix input;
    Matrix pre;
    Matrix act;
};

struct AdapterTrace {
    ExpertSelection selection;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<BlockTrace> blocks;
    std::array<ResidualTrace, 2> reduction;
    Matrix pooled;        // tokens after the 2x pool
    Matrix projector_pre;
    Matrix projector_act;
};

}  // namespace mova
