// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "mova/numerics.hpp"
#include "mova/rng.hpp"

namespace testutil {

inline mova::Matrix random_matrix(mova::Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    return mova::Matrix(r, c, mova::normal_draws(rng, r * c, scale));
}

inline mova::FeatureMap random_map(mova::Rng& rng, std::size_t c, std::size_t h, std::size_t w) {
    return mova::FeatureMap(c, h, w, mova::normal_draws(rng, c * h * w));
}

inline std::size_t uniform(mova::Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("mova-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
