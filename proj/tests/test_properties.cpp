// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "mova/properties.hpp"

using namespace mova;

TEST_SUITE("properties") {
    TEST_CASE("the suite passes with the real gate") {
        const auto groups = run_property_suite();
        REQUIRE(groups.size() == 7);
        for (const auto& g : groups) {
            CHECK_MESSAGE(g.ok(), g.name << ": " << (g.failures.empty() ? "" : g.failures.front()));
            CHECK(g.passed > 0);
        }
        CHECK(all_passed(groups));
        CHECK(property_report_json(groups).find("\"ok\": true") != std::string::npos);
    }

    TEST_CASE("a mis-normalised gate is caught") {
        PropertyOptions opt;
        opt.gate = [](const GatingInput& in, const ExpertSelection& s, const GatingNetwork& n, GatingMode m) {
            auto w = gate_weights(in, s, n, m);
            for (auto& v : w.weights) v *= 1.01;
            return w;
        };
        const auto groups = run_property_suite(opt);
        bool simplex_failed = false;
        for (const auto& g : groups) {
            if (g.name == "gate-simplex") simplex_failed = !g.ok();
        }
        CHECK(simplex_failed);
        CHECK(!all_passed(groups));
    }
}
