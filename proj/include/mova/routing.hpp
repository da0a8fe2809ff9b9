// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Coarse-grained routing: the multiple-choice prompt handed to a router LLM,
// the parser for its letter answer, the coarse image tokens it sees, and the
// strategies that stand in for the LLM itself.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "mova/experts.hpp"
#include "mova/numerics.hpp"
#include "mova/routing_data.hpp"
#include "mova/selection.hpp"

namespace mova {

inline constexpr const char* kRouterOpening =
    "As a router, your task is to choose several models from a model pool to assist you. Below is a brief "
    "overview of the expertise of each model in the pool:";
inline constexpr const char* kRouterQuestionHeader = "Here is user question:";
inline constexpr const char* kRouterFence = "###";
inline constexpr const char* kRouterClosing =
    "Identify and select models that will best enable you to accurately answer questions. Please consider the "
    "image contents, questions, and expertise of these models when you perform selection. Answer with the "
    "model's letter from the given choices directly.";

/// Lines joined with '\n': opening, "<letter>. <description>" per expert,
/// header, fence, question, fence, closing.
std::string build_routing_prompt(const ExpertRegistry& registry, const std::string& question);

/// Recovers the question between the line-anchored fences of a prompt built
/// by build_routing_prompt.
std::string prompt_question(const std::string& prompt);

/// Splits on commas and whitespace, strips trailing periods, keeps
/// first-occurrence order and drops repeats. Every token must be a single
/// uppercase letter.
ExpertSelection parse_routing_response(const std::string& response, const ExpertRegistry& registry);

/// Canonical "A, D" rendering of a selection.
std::string render_selection(const ExpertSelection& selection);

/// Adaptive average pool of the base feature to grid x grid, flattened
/// row-major into grid² tokens of C channels.
Matrix coarse_image_tokens(const FeatureMap& base, std::size_t grid = 8);

enum class StrategyKind { annotation, oracle, random, all, scripted };

std::string to_string(StrategyKind kind);
StrategyKind strategy_from_string(const std::string& s);

struct RoutingContext {
    std::map<std::string, RoutingAnnotation> annotations;
    std::map<std::string, LossRecord> losses;
    std::uint64_t seed = 0;
    std::size_t cap = kDefaultRoutingCap;
    std::optional<std::string> response;
};

struct RoutingDecision {
    ExpertSelection selection;
    std::string raw_response;
    std::string strategy;
};

/// Throws RoutingError(missing_context) when the strategy's input is absent.
RoutingDecision route(StrategyKind strategy, const ExpertRegistry& registry, const Sample& sample,
                      const RoutingContext& context);

/// {"experts":[names],"letters":[..],"strategy":..}
std::string decision_to_json(const RoutingDecision& decision, const ExpertRegistry& registry);

}  // namespace mova
