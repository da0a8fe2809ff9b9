// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <numeric>
#include <set>
#include <sstream>

#include "mova/errors.hpp"
#include "mova/routing.hpp"
#include "test_util.hpp"

using namespace mova;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

RoutingError::Kind parse_error_kind(const std::string& response) {
    try {
        parse_routing_response(response, default_registry());
    } catch (const RoutingError& e) {
        return e.kind();
    }
    FAIL("expected RoutingError for '" << response << "'");
    return RoutingError::Kind::routed_empty;
}

}  // namespace

TEST_SUITE("routing") {
    TEST_CASE("prompt skeleton") {
        const auto registry = default_registry();
        const std::string q = "What is the value of the largest bar?";
        const auto lines = lines_of(build_routing_prompt(registry, q));
        REQUIRE(lines.size() == 1 + 7 + 4 + 1);
        CHECK(lines[0] ==
              "As a router, your task is to choose several models from a model pool to assist you. Below is a brief "
              "overview of the expertise of each model in the pool:");
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(lines[1 + i] == std::string(1, static_cast<char>('A' + i)) + ". " + registry[i].description);
        }
        CHECK(lines[8] == "Here is user question:");
        CHECK(lines[9] == "###");
        CHECK(lines[10] == q);
        CHECK(lines[11] == "###");
        CHECK(lines[12] ==
              "Identify and select models that will best enable you to accurately answer questions. Please consider "
              "the image contents, questions, and expertise of these models when you perform selection. Answer with "
              "the model's letter from the given choices directly.");
        CHECK(build_routing_prompt(registry, q).back() != '\n');
        CHECK_THROWS_AS(build_routing_prompt(registry, ""), ValidationError);
    }

    TEST_CASE("question survives the prompt, including fences and newlines") {
        const auto registry = default_registry();
        for (const std::string q : {"plain", "two\nlines", "contains\n###\nfence", "### leading"}) {
            CHECK(prompt_question(build_routing_prompt(registry, q)) == q);
        }
        CHECK_THROWS_AS(prompt_question("no sections here"), ValidationError);
    }

    TEST_CASE("response parsing") {
        const auto registry = default_registry();
        const auto ad = parse_routing_response("A, D", registry);
        CHECK(ad.indices == std::vector<std::size_t>{0, 3});
        CHECK(registry[ad.indices[0]].name == "dinov2");
        CHECK(registry[ad.indices[1]].name == "pix2struct");
        CHECK(parse_routing_response("D A.", registry).indices == std::vector<std::size_t>{3, 0});
        CHECK(parse_routing_response("B,B, C", registry).indices == std::vector<std::size_t>{1, 2});
        CHECK(parse_routing_response(" G\n", registry).indices == std::vector<std::size_t>{6});
        CHECK(render_selection(ad) == "A, D");

        CHECK(parse_error_kind("") == RoutingError::Kind::empty_response);
        CHECK(parse_error_kind(" , . ") == RoutingError::Kind::empty_response);
        CHECK(parse_error_kind("H") == RoutingError::Kind::unknown_expert);
        CHECK(parse_error_kind("a, d") == RoutingError::Kind::malformed_response);
        CHECK(parse_error_kind("AD") == RoutingError::Kind::malformed_response);
        CHECK(parse_error_kind("A; D") == RoutingError::Kind::malformed_response);
    }

    TEST_CASE("every subset round trips through its rendering") {
        const auto registry = default_registry();
        for (unsigned mask = 1; mask < 128; ++mask) {
            ExpertSelection s;
            for (std::size_t j = 0; j < 7; ++j)
                if (mask & (1u << j)) s.indices.push_back(j);
            CHECK(parse_routing_response(render_selection(s), registry) == s);
        }
    }

    TEST_CASE("coarse image tokens") {
        Rng rng(5);
        const auto f = testutil::random_map(rng, 8, 48, 48);
        const auto t = coarse_image_tokens(f);
        CHECK(t.rows() == 64);
        CHECK(t.cols() == 8);
        const auto t4 = coarse_image_tokens(testutil::random_map(rng, 8, 8, 8), 4);
        CHECK(t4.rows() == 16);
        CHECK_THROWS_AS(coarse_image_tokens(f, 0), ShapeError);
        // 8 -> 8 is the identity pooling.
        const auto same = testutil::random_map(rng, 2, 8, 8);
        CHECK(coarse_image_tokens(same, 8) == to_tokens(same));
    }

    TEST_CASE("strategies") {
        const auto registry = default_registry();
        Sample s{"s1", 3, "question", {}, std::nullopt};
        RoutingContext ctx;

        const auto all = route(StrategyKind::all, registry, s, ctx);
        CHECK(all.selection.indices == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
        CHECK(all.raw_response == "A, B, C, D, E, F, G");

        ctx.annotations["s1"] = RoutingAnnotation{"s1", {"dinov2", "pix2struct"}};
        CHECK(route(StrategyKind::annotation, registry, s, ctx).selection.indices == std::vector<std::size_t>{0, 3});

        ctx.losses["s1"] = LossRecord{"s1", 2.0, {1.5, 1.9, 1.99, 1.0, 2.3, 2.1, 2.0}};
        CHECK(route(StrategyKind::oracle, registry, s, ctx).selection.indices == std::vector<std::size_t>{3, 0, 1});

        ctx.seed = 77;
        const auto r1 = route(StrategyKind::random, registry, s, ctx);
        const auto r2 = route(StrategyKind::random, registry, s, ctx);
        CHECK(r1.selection == r2.selection);
        CHECK(r1.selection.size() >= 1);
        CHECK(r1.selection.size() <= 3);
        CHECK(std::is_sorted(r1.selection.indices.begin(), r1.selection.indices.end()));

        ctx.response = "C, A";
        const auto scripted = route(StrategyKind::scripted, registry, s, ctx);
        CHECK(scripted.selection.indices == std::vector<std::size_t>{2, 0});
        CHECK(scripted.raw_response == "C, A");
        CHECK(decision_to_json(scripted, registry) ==
              R"({"experts":["sam","dinov2"],"letters":["C","A"],"strategy":"scripted"})");

        Sample other{"s2", 3, "question", {}, std::nullopt};
        RoutingContext empty;
        for (auto k : {StrategyKind::annotation, StrategyKind::oracle, StrategyKind::scripted}) {
            try {
                route(k, registry, other, empty);
                FAIL("expected missing context");
            } catch (const RoutingError& e) {
                CHECK(e.kind() == RoutingError::Kind::missing_context);
            }
        }
        CHECK(strategy_from_string("oracle") == StrategyKind::oracle);
        CHECK_THROWS_AS(strategy_from_string("llm"), ValidationError);
    }

    TEST_CASE("random strategy respects the cap over many draws") {
        const auto registry = default_registry();
        RoutingContext ctx;
        ctx.cap = 3;
        std::set<std::size_t> sizes;
        for (int t = 0; t < 10000; ++t) {
            Sample s{"draw" + std::to_string(t), 0, "q", {}, std::nullopt};
            ctx.seed = static_cast<std::uint64_t>(t % 13);
            const auto d = route(StrategyKind::random, registry, s, ctx);
            REQUIRE(d.selection.size() <= 3);
            sizes.insert(d.selection.size());
        }
        CHECK(sizes == std::set<std::size_t>{1, 2, 3});
    }
}
