// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/pipeline.hpp"

#include <json.hpp>

#include "mova/errors.hpp"
#include "mova/movt.hpp"

namespace mova {

namespace {

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

}  // namespace

PipelineResult run_pipeline(const ExpertRegistry& registry, const PipelineRequest& request) {
    PipelineResult result;
    Sample sample;
    sample.sample_id = request.sample_id;
    sample.image_seed = request.image_seed;
    sample.question = request.question;

    result.decision = in_stage("routing", [&] {
        if (request.question.empty()) throw ValidationError("question must be non-empty");
        try {
            return route(request.strategy, registry, sample, request.context);
        } catch (const RoutingError& e) {
            if (!request.empty_response_fallback || e.kind() != RoutingError::Kind::empty_response) throw;
            RoutingDecision d;
            d.strategy = to_string(request.strategy);
            d.raw_response = request.context.response.value_or("");
            return d;
        }
    });

    const AdapterParams params = in_stage("params", [&] {
        request.config.validate();
        auto shape = init_params(request.config, registry, request.config.seed);
        return request.params_dir ? load_params(*request.params_dir, shape) : shape;
    });

    FeatureMap base;
    ExpertFeatures features;
    in_stage("features", [&] {
        base = generate_base_feature(registry, sample.image_seed);
        for (auto j : result.decision.selection.indices) {
            features.emplace(j, generate_expert_feature(registry[j], sample.image_seed, false, {}));
        }
        return 0;
    });

    result.output = in_stage("adapter", [&] {
        return adapter_forward(base, features, result.decision.selection, request.question, params, request.config);
    });

    in_stage("output", [&] {
        movt::save(request.out_path, result.output.tokens.to_tensor());
        return 0;
    });
    return result;
}

std::string pipeline_summary_json(const PipelineResult& result, const ExpertRegistry& registry) {
    nlohmann::ordered_json j;
    j["decision"] = nlohmann::ordered_json::parse(decision_to_json(result.decision, registry));
    j["raw_response"] = result.decision.raw_response;
    j["gates"] = nlohmann::ordered_json::array();
    const auto& sel = result.decision.selection.indices;
    for (std::size_t b = 0; b < result.output.gates.size(); ++b) {
        nlohmann::ordered_json w = nlohmann::ordered_json::object();
        const auto& g = result.output.gates[b].weights;
        for (std::size_t k = 0; k < g.size(); ++k) w[registry[sel[k]].name] = g[k];
        j["gates"].push_back({{"block", b}, {"weights", w}});
    }
    j["tokens"] = {{"rows", result.output.tokens.rows()}, {"cols", result.output.tokens.cols()}};
    return j.dump(2);
}

}  // namespace mova
