// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/routing.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mova/errors.hpp"
#include "mova/rng.hpp"

namespace mova {

std::string build_routing_prompt(const ExpertRegistry& registry, const std::string& question) {
    if (question.empty()) throw ValidationError("routing prompt: question must be non-empty");
    std::ostringstream os;
    os << kRouterOpening << '\n';
    for (const auto& e : registry.experts()) os << e.letter << ". " << e.description << '\n';
    os << kRouterQuestionHeader << '\n' << kRouterFence << '\n' << question << '\n' << kRouterFence << '\n';
    os << kRouterClosing;
    return os.str();
}

std::string prompt_question(const std::string& prompt) {
    std::vector<std::string> lines;
    std::istringstream in(prompt);
    for (std::string line; std::getline(in, line);) lines.push_back(line);

    auto header = std::find(lines.begin(), lines.end(), kRouterQuestionHeader);
    if (header == lines.end() || std::next(header) == lines.end() || *std::next(header) != kRouterFence) {
        throw ValidationError("routing prompt: question section not found");
    }
    const auto open = std::next(header);
    // The closing fence is the last fence line before the closing instruction,
    // so fence text inside the question survives.
    auto closing = std::find(open, lines.end(), kRouterClosing);
    auto close = std::find(std::make_reverse_iterator(closing), std::make_reverse_iterator(std::next(open)),
                           std::string(kRouterFence));
    if (close == std::make_reverse_iterator(std::next(open))) {
        throw ValidationError("routing prompt: unterminated question section");
    }
    const auto end = std::prev(close.base());
    std::string out;
    for (auto it = std::next(open); it != end; ++it) {
        if (it != std::next(open)) out += '\n';
        out += *it;
    }
    return out;
}

ExpertSelection parse_routing_response(const std::string& response, const ExpertRegistry& registry) {
    std::string normalized = response;
    std::replace(normalized.begin(), normalized.end(), ',', ' ');
    std::istringstream in(normalized);
    ExpertSelection out;
    for (std::string token; in >> token;) {
        while (!token.empty() && token.back() == '.') token.pop_back();
        if (token.empty()) continue;
        if (token.size() != 1 || token[0] < 'A' || token[0] > 'Z') {
            throw RoutingError(RoutingError::Kind::malformed_response,
                               "routing response: unrecognised token '" + token + "'");
        }
        const auto index = static_cast<std::size_t>(token[0] - 'A');
        if (index >= registry.size()) {
            throw RoutingError(RoutingError::Kind::unknown_expert,
                               "routing response: letter " + token + " names no expert in a pool of " +
                                   std::to_string(registry.size()));
        }
        if (!out.contains(index)) out.indices.push_back(index);
    }
    if (out.empty()) throw RoutingError(RoutingError::Kind::empty_response, "routing response: no expert letters");
    return out;
}

std::string render_selection(const ExpertSelection& selection) {
    std::string out;
    for (std::size_t k = 0; k < selection.size(); ++k) {
        if (k) out += ", ";
        out += static_cast<char>('A' + selection.indices[k]);
    }
    return out;
}

Matrix coarse_image_tokens(const FeatureMap& base, std::size_t grid) {
    if (grid == 0) throw ShapeError("coarse_image_tokens: grid must be >= 1");
    return to_tokens(adaptive_avg_pool(base, grid, grid));
}

std::string to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::annotation: return "annotation";
        case StrategyKind::oracle: return "oracle";
        case StrategyKind::random: return "random";
        case StrategyKind::all: return "all";
        case StrategyKind::scripted: return "scripted";
    }
    return "?";
}

StrategyKind strategy_from_string(const std::string& s) {
    for (auto k : {StrategyKind::annotation, StrategyKind::oracle, StrategyKind::random, StrategyKind::all,
                   StrategyKind::scripted}) {
        if (to_string(k) == s) return k;
    }
    throw ValidationError("unknown routing strategy '" + s + "'");
}

RoutingDecision route(StrategyKind strategy, const ExpertRegistry& registry, const Sample& sample,
                      const RoutingContext& context) {
    RoutingDecision d;
    d.strategy = to_string(strategy);
    switch (strategy) {
        case StrategyKind::annotation: {
            auto it = context.annotations.find(sample.sample_id);
            if (it == context.annotations.end()) {
                throw RoutingError(RoutingError::Kind::missing_context,
                                   "annotation strategy: no annotation for sample '" + sample.sample_id + "'");
            }
            d.selection = annotation_selection(it->second, registry);
            break;
        }
        case StrategyKind::oracle: {
            auto it = context.losses.find(sample.sample_id);
            if (it == context.losses.end()) {
                throw RoutingError(RoutingError::Kind::missing_context,
                                   "oracle strategy: no loss record for sample '" + sample.sample_id + "'");
            }
            it->second.validate(registry.size());
            d.selection = construct_routing_set(it->second, context.cap);
            break;
        }
        case StrategyKind::random: {
            if (context.cap == 0) throw ValidationError("random strategy: cap must be >= 1");
            Rng rng(combine_seeds(context.seed, hash_string(sample.sample_id)));
            const std::size_t limit = std::min(context.cap, registry.size());
            std::uniform_int_distribution<std::size_t> size_dist(1, limit);
            const std::size_t k = size_dist(rng);
            std::vector<std::size_t> pool(registry.size());
            std::iota(pool.begin(), pool.end(), 0);
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
                std::swap(pool[i], pool[pick(rng)]);
            }
            pool.resize(k);
            std::sort(pool.begin(), pool.end());
            d.selection.indices = std::move(pool);
            break;
        }
        case StrategyKind::all:
            d.selection.indices.resize(registry.size());
            std::iota(d.selection.indices.begin(), d.selection.indices.end(), 0);
            break;
        case StrategyKind::scripted:
            if (!context.response) {
                throw RoutingError(RoutingError::Kind::missing_context, "scripted strategy: no response text supplied");
            }
            d.raw_response = *context.response;
            d.selection = parse_routing_response(*context.response, registry);
            return d;
    }
    d.raw_response = render_selection(d.selection);
    return d;
}

std::string decision_to_json(const RoutingDecision& decision, const ExpertRegistry& registry) {
    nlohmann::ordered_json j;
    j["experts"] = nlohmann::ordered_json::array();
    j["letters"] = nlohmann::ordered_json::array();
    for (auto i : decision.selection.indices) {
        j["experts"].push_back(registry[i].name);
        j["letters"].push_back(std::string(1, registry[i].letter));
    }
    j["strategy"] = decision.strategy;
    return j.dump();
}

}  // namespace mova
