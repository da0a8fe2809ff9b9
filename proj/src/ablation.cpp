// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/ablation.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mova/errors.hpp"
#include "mova/rng.hpp"
#include "mova/routing.hpp"

namespace mova {

std::string AblationMode::name() const {
    switch (kind) {
        case AblationKind::dynamic: return "dynamic";
        case AblationKind::random_routing: return "random-routing";
        case AblationKind::all_experts: return "all-experts";
        case AblationKind::uniform_gating: return "uniform-gating";
        case AblationKind::fixed_k: return "fixed-K:" + std::to_string(k);
    }
    return "?";
}

AblationMode parse_ablation_mode(const std::string& text) {
    for (auto kind : {AblationKind::dynamic, AblationKind::random_routing, AblationKind::all_experts,
                      AblationKind::uniform_gating}) {
        AblationMode m{kind, 0};
        if (m.name() == text) return m;
    }
    const std::string prefix = "fixed-K:";
    if (text.rfind(prefix, 0) == 0) {
        const std::string digits = text.substr(prefix.size());
        if (!digits.empty() && std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            const auto k = std::stoul(digits);
            if (k >= 1) return {AblationKind::fixed_k, k};
        }
    }
    throw ValidationError("unknown ablation mode '" + text +
                          "' (expected dynamic, random-routing, all-experts, uniform-gating or fixed-K:k)");
}

std::vector<AblationMode> parse_ablation_modes(const std::string& comma_list) {
    std::vector<AblationMode> out;
    std::istringstream in(comma_list);
    for (std::string item; std::getline(in, item, ',');) out.push_back(parse_ablation_mode(item));
    if (out.empty()) throw ValidationError("no ablation modes given");
    return out;
}

ExpertSelection ablation_selection(const AblationMode& mode, const ExpertRegistry& registry, const Sample& sample,
                                   const LossRecord& losses, const AblationConfig& config) {
    switch (mode.kind) {
        case AblationKind::dynamic:
        case AblationKind::uniform_gating:
            losses.validate(registry.size());
            return construct_routing_set(losses, config.cap);
        case AblationKind::random_routing: {
            RoutingContext ctx;
            ctx.seed = config.routing_seed;
            ctx.cap = config.cap;
            return route(StrategyKind::random, registry, sample, ctx).selection;
        }
        case AblationKind::all_experts: {
            ExpertSelection s;
            s.indices.resize(registry.size());
            std::iota(s.indices.begin(), s.indices.end(), 0);
            return s;
        }
        case AblationKind::fixed_k: {
            losses.validate(registry.size());
            if (mode.k > registry.size()) {
                throw ValidationError(mode.name() + ": pool has only " + std::to_string(registry.size()) + " experts");
            }
            std::vector<std::size_t> order(registry.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return losses.expert_losses[a] < losses.expert_losses[b];
            });
            order.resize(mode.k);
            std::sort(order.begin(), order.end());
            return ExpertSelection{order};
        }
    }
    return {};
}

std::vector<AblationEntry> run_ablation(const std::vector<AblationMode>& modes, const ExpertRegistry& registry,
                                        const SyntheticCorpus& corpus, const AblationConfig& config) {
    if (modes.empty()) throw ValidationError("run_ablation: no modes");
    std::map<std::string, const LossRecord*> losses;
    for (const auto& r : corpus.losses) losses[r.sample_id] = &r;

    std::vector<AblationEntry> out;
    for (const auto& mode : modes) {
        ToyTrainConfig train = config.train;
        train.adapter.gating_mode =
            mode.kind == AblationKind::uniform_gating ? GatingMode::uniform : GatingMode::dynamic;
        double selected = 0.0;
        std::uint64_t digest = hash_string("");
        auto policy = [&](const Sample& s) {
            digest = combine_seeds(digest, combine_seeds(hash_string(s.sample_id), s.image_seed));
            auto it = losses.find(s.sample_id);
            if (it == losses.end()) throw ValidationError("ablation: no loss record for sample '" + s.sample_id + "'");
            auto sel = ablation_selection(mode, registry, s, *it->second, config);
            selected += static_cast<double>(sel.size());
            return sel;
        };
        auto report = train_toy(train, registry, corpus.samples, policy);
        AblationEntry e;
        e.mode = mode.name();
        e.eval_loss = report.eval_loss;
        e.mean_selected = selected / static_cast<double>(corpus.samples.size());
        e.loss_trace = std::move(report.loss_trace);
        e.stream_digest = digest;
        out.push_back(std::move(e));
    }
    return out;
}

std::string ablation_to_json(const std::vector<AblationEntry>& entries) {
    nlohmann::ordered_json j;
    j["modes"] = nlohmann::ordered_json::array();
    for (const auto& e : entries) {
        j["modes"].push_back({{"mode", e.mode},
                              {"eval_loss", e.eval_loss},
                              {"mean_selected", e.mean_selected},
                              {"final_train_loss", e.loss_trace.empty() ? 0.0 : e.loss_trace.back()},
                              {"stream_digest", e.stream_digest}});
    }
    return j.dump(2);
}

}  // namespace mova
