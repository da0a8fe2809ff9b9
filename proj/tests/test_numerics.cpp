// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <memory>

#include "mova/errors.hpp"
#include "mova/movt.hpp"
#include "mova/numerics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mova;

TEST_SUITE("numerics") {
    TEST_CASE("matmul variants agree with the triple loop") {
        Rng rng(1);
        for (int t = 0; t < 100; ++t) {
            const auto n = testutil::uniform(rng, 1, 7), k = testutil::uniform(rng, 1, 7), m = testutil::uniform(rng, 1, 7);
            const auto a = testutil::random_matrix(rng, n, k), b = testutil::random_matrix(rng, k, m);
            CHECK(oracle::max_abs_diff(matmul(a, b).data(), oracle::matmul(a, b).data()) <= 1e-12);

            Matrix at(k, n), bt(m, k);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < k; ++j) at(j, i) = a(i, j);
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < m; ++j) bt(j, i) = b(i, j);
            CHECK(oracle::max_abs_diff(matmul_tn(at, b).data(), oracle::matmul(a, b).data()) <= 1e-12);
            CHECK(oracle::max_abs_diff(matmul_nt(a, bt).data(), oracle::matmul(a, b).data()) <= 1e-12);
        }
        CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
    }

    TEST_CASE("softmax is stable and masks exactly") {
        const std::vector<double> big = {1000.0, 1001.0, 999.0};
        const auto p = softmax(big);
        CHECK(std::abs(p[0] + p[1] + p[2] - 1.0) < 1e-12);
        CHECK(p[1] > p[0]);
        CHECK(p[0] > p[2]);

        const std::vector<double> v = {0.3, -1.2, 2.0, 0.0};
        const bool mask[] = {true, false, true, false};
        const auto q = softmax(v, std::span<const bool>(mask, 4));
        CHECK(q[1] == 0.0);
        CHECK(q[3] == 0.0);
        const auto ref = oracle::subset_softmax(v, {0, 2});
        CHECK(std::abs(q[0] - ref[0]) < 1e-15);
        CHECK(std::abs(q[2] - ref[1]) < 1e-15);

        const bool none[] = {false, false, false, false};
        CHECK_THROWS_AS(softmax(v, std::span<const bool>(none, 4)), ValidationError);
        CHECK_THROWS_AS(softmax(std::vector<double>{}), ValidationError);
    }

    TEST_CASE("bilinear interpolation matches the closed form") {
        Rng rng(2);
        for (int t = 0; t < 60; ++t) {
            const auto f = testutil::random_map(rng, testutil::uniform(rng, 1, 3), testutil::uniform(rng, 1, 6),
                                                testutil::uniform(rng, 1, 6));
            const auto oh = testutil::uniform(rng, 1, 13), ow = testutil::uniform(rng, 1, 13);
            CHECK(oracle::max_abs_diff(bilinear_interpolate(f, oh, ow).data(), oracle::bilinear(f, oh, ow).data()) <=
                  1e-12);
            CHECK(bilinear_interpolate(f, f.height(), f.width()) == f);
        }
        // 2x2 -> 3x3: the centre is the mean of the four corners.
        FeatureMap f(1, 2, 2, std::vector<double>{1.0, 2.0, 3.0, 4.0});
        const auto g = bilinear_interpolate(f, 3, 3);
        CHECK(g.at(0, 1, 1) == doctest::Approx(2.5).epsilon(1e-15));
        CHECK(g.at(0, 0, 0) == 1.0);
        CHECK(g.at(0, 2, 2) == 4.0);
        CHECK_THROWS_AS(bilinear_interpolate(f, 0, 3), ShapeError);
    }

    TEST_CASE("pooling") {
        FeatureMap f(1, 2, 4, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
        const auto p = avg_pool_2x(f);
        CHECK(p.height() == 1);
        CHECK(p.width() == 2);
        CHECK(p.at(0, 0, 0) == 3.5);
        CHECK(p.at(0, 0, 1) == 5.5);
        CHECK_THROWS_AS(avg_pool_2x(FeatureMap(1, 3, 4)), ShapeError);

        const auto g = global_avg_pool(f);
        CHECK(g[0] == 4.5);

        // 5 -> 2 regions: [0, 3) and [2, 5) overlap at index 2.
        FeatureMap row(1, 1, 5, std::vector<double>{1, 2, 3, 4, 5});
        const auto a = adaptive_avg_pool(row, 1, 2);
        CHECK(a.at(0, 0, 0) == doctest::Approx(2.0));
        CHECK(a.at(0, 0, 1) == doctest::Approx(4.0));
        CHECK_THROWS_AS(adaptive_avg_pool(row, 2, 2), ShapeError);
    }

    TEST_CASE("scaled dot attention matches the explicit formula") {
        Rng rng(3);
        for (int t = 0; t < 30; ++t) {
            const auto n = testutil::uniform(rng, 1, 6), m = testutil::uniform(rng, 1, 6), d = testutil::uniform(rng, 1, 5);
            const auto q = testutil::random_matrix(rng, n, d), k = testutil::random_matrix(rng, m, d),
                       v = testutil::random_matrix(rng, m, d);
            const auto out = scaled_dot_attention(q, k, v);
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> s(m);
                for (std::size_t j = 0; j < m; ++j) {
                    for (std::size_t c = 0; c < d; ++c) s[j] += q(i, c) * k(j, c);
                    s[j] /= std::sqrt(static_cast<double>(d));
                }
                std::vector<std::size_t> all(m);
                for (std::size_t j = 0; j < m; ++j) all[j] = j;
                const auto p = oracle::subset_softmax(s, all);
                for (std::size_t c = 0; c < d; ++c) {
                    double e = 0.0;
                    for (std::size_t j = 0; j < m; ++j) e += p[j] * v(j, c);
                    CHECK(std::abs(out(i, c) - e) <= 1e-12);
                }
            }
        }
    }

    TEST_CASE("finite difference checker") {
        const Tensor x({3}, {0.5, -1.0, 2.0});
        auto f = [](const Tensor& t) {
            double s = 0.0;
            for (double v : t.data()) s += v * v * v;
            return s;
        };
        const Tensor g({3}, {3 * 0.25, 3 * 1.0, 3 * 4.0});
        const auto r = finite_diff_check("cube", x, f, g, 1e-5);
        CHECK(r.compared == 3);
        CHECK(r.max_relative_error < 1e-8);

        const Tensor wrong({3}, {0.75, 3.0, 11.0});
        const auto bad = finite_diff_check("cube", x, f, wrong, 1e-5);
        CHECK(bad.worst_index == 2);
        CHECK(bad.max_relative_error > 1e-2);

        auto nan_fn = [](const Tensor& t) { return t.data()[0] > 0.5 ? std::nan("") : 0.0; };
        CHECK_THROWS_AS(finite_diff_check("nan", x, nan_fn, g, 1e-5), NumericError);
        CHECK_THROWS_AS(finite_diff_check("eps", x, f, g, 0.0), ValidationError);
    }

    TEST_CASE("containers validate their inputs") {
        CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
        CHECK_THROWS_AS(Tensor({2}, {1.0}), ShapeError);
        CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), NumericError);
        CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
        FeatureMap f(2, 1, 2, std::vector<double>{1, 2, 3, 4});
        const auto t = to_tokens(f);
        CHECK(t(0, 0) == 1);
        CHECK(t(0, 1) == 3);
        CHECK(t(1, 0) == 2);
        CHECK(from_tokens(t, 1, 2) == f);
    }
}

TEST_SUITE("movt") {
    TEST_CASE("header layout and lossless round trip of float values") {
        const Tensor t({2, 3}, {1.0, -2.5, 0.125, 3.0, 1e-3f, 65504.0});
        const auto bytes = movt::encode(t);
        REQUIRE(bytes.size() == 4 + 1 + 1 + 2 * 4 + 6 * 4);
        CHECK(bytes[0] == 0x4D);
        CHECK(bytes[1] == 0x4F);
        CHECK(bytes[2] == 0x56);
        CHECK(bytes[3] == 0x54);
        CHECK(bytes[4] == 1);
        CHECK(bytes[5] == 2);
        CHECK(bytes[6] == 2);  // extent 0, little endian
        CHECK(bytes[10] == 3);
        const auto back = movt::decode(bytes);
        CHECK(back == t);
        CHECK(movt::encode(back) == bytes);

        const auto dir = testutil::scratch("movt");
        movt::save(dir / "t.movt", t);
        CHECK(movt::load(dir / "t.movt") == t);
    }

    TEST_CASE("random tensors round trip at float precision") {
        Rng rng(4);
        for (int i = 0; i < 20; ++i) {
            const auto r = testutil::uniform(rng, 1, 4);
            std::vector<std::size_t> dims;
            std::size_t n = 1;
            for (std::size_t k = 0; k < r; ++k) n *= dims.emplace_back(testutil::uniform(rng, 1, 4));
            std::vector<double> data;
            for (double v : normal_draws(rng, n)) data.push_back(static_cast<float>(v));
            const Tensor t(dims, data);
            CHECK(movt::decode(movt::encode(t)) == t);
        }
    }

    TEST_CASE("corrupt files are rejected") {
        const auto good = movt::encode(Tensor({2}, {1.0, 2.0}));
        auto bad_magic = good;
        bad_magic[0] = 'X';
        CHECK_THROWS_AS(movt::decode(bad_magic), ValidationError);
        auto bad_version = good;
        bad_version[4] = 9;
        CHECK_THROWS_AS(movt::decode(bad_version), ValidationError);
        auto truncated = good;
        truncated.pop_back();
        CHECK_THROWS_AS(movt::decode(truncated), ValidationError);
        auto trailing = good;
        trailing.push_back(0);
        CHECK_THROWS_AS(movt::decode(trailing), ValidationError);
        CHECK_THROWS_AS(movt::load("/nonexistent/dir/x.movt"), IoError);
    }
}
