// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "mova/errors.hpp"
#include "mova/experts.hpp"
#include "mova/text_encoder.hpp"
#include "test_util.hpp"

using namespace mova;

namespace {

ExpertSpec spec(char letter, std::string name) {
    return {letter, std::move(name), "does things", {4, 2, 2}, 7};
}

}  // namespace

TEST_SUITE("experts") {
    TEST_CASE("desk pool layout") {
        const auto r = default_registry();
        REQUIRE(r.size() == 7);
        const char* names[] = {"dinov2", "codetr", "sam", "pix2struct", "deplot", "vary", "biomedclip"};
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(r[i].name == names[i]);
            CHECK(r[i].letter == static_cast<char>('A' + i));
            CHECK(r[i].geometry == Geometry{16, 4, 4});
        }
        CHECK(r.base() == Geometry{8, 8, 8});
        CHECK(r.index_of("pix2struct") == 3);
        CHECK_FALSE(r.find("clip").has_value());
        CHECK_THROWS_AS(r.index_of("clip"), ValidationError);
    }

    TEST_CASE("registry validation") {
        const Geometry base{4, 2, 2};
        CHECK_THROWS_AS(ExpertRegistry(base, {}), ValidationError);
        CHECK_THROWS_AS(ExpertRegistry(base, {spec('A', "x"), spec('B', "x")}), ValidationError);
        CHECK_THROWS_AS(ExpertRegistry(base, {spec('A', "x"), spec('C', "y")}), ValidationError);
        CHECK_THROWS_AS(ExpertRegistry(base, {spec('A', "")}), ValidationError);
        auto no_desc = spec('A', "x");
        no_desc.description.clear();
        CHECK_THROWS_AS(ExpertRegistry(base, {no_desc}), ValidationError);
        auto flat = spec('A', "x");
        flat.geometry.height = 0;
        CHECK_THROWS_AS(ExpertRegistry(base, {flat}), ValidationError);
        std::vector<ExpertSpec> many;
        for (int i = 0; i < 27; ++i) many.push_back(spec(static_cast<char>('A' + i % 26), "e" + std::to_string(i)));
        CHECK_THROWS_AS(ExpertRegistry(base, many), ValidationError);
    }

    TEST_CASE("registry JSON round trip and file IO") {
        const auto r = default_registry();
        CHECK(registry_from_json(registry_to_json(r)) == r);
        const auto dir = testutil::scratch("experts");
        save_registry(r, dir / "experts.json");
        CHECK(load_registry(dir / "experts.json") == r);
        CHECK_THROWS_AS(registry_from_json("{not json"), ValidationError);
        CHECK_THROWS_AS(registry_from_json("[]"), ValidationError);
        CHECK_THROWS_AS(load_registry(dir / "missing.json"), IoError);
    }

    TEST_CASE("planted features carry the answer in their channel means") {
        const auto r = default_registry();
        const std::vector<double> answer = {0.5, -1.25, 2.0, 0.0};
        const auto f = generate_expert_feature(r[3], 99, true, answer);
        const auto pooled = global_avg_pool(f);
        for (std::size_t c = 0; c < answer.size(); ++c) CHECK(std::abs(pooled[c] - answer[c]) < 1e-12);
        CHECK(f == generate_expert_feature(r[3], 99, true, answer));
        CHECK_FALSE(f == generate_expert_feature(r[3], 100, true, answer));
        CHECK_THROWS_AS(generate_expert_feature(r[3], 1, true, std::vector<double>(17, 0.0)), ValidationError);

        Sample s{"s", 99, "q", answer, std::string("pix2struct")};
        const auto all = generate_all_expert_features(r, s);
        REQUIRE(all.size() == 7);
        CHECK(all[3] == f);
        CHECK(all[0] == generate_expert_feature(r[0], 99, false, {}));
        const auto base = generate_base_feature(r, 99);
        CHECK(base.dims() == std::vector<std::size_t>{8, 8, 8});
        CHECK(base == generate_base_feature(r, 99));
    }

    TEST_CASE("hash text encoder") {
        const auto a = encode_text("how many cats", 8);
        double norm = 0.0;
        for (double v : a.values) norm += v * v;
        CHECK(std::abs(norm - 1.0) < 1e-12);
        CHECK(a == encode_text("how  many\tcats", 8));
        CHECK_FALSE(a == encode_text("how many dogs", 8));
        CHECK(encode_text("", 8).values == std::vector<double>(8, 0.0));
        CHECK(HashTextEncoder(5).encode("x").values.size() == 5);
    }
}
