// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/text_encoder.hpp"

#include <cmath>
#include <sstream>

#include "mova/errors.hpp"
#include "mova/rng.hpp"

namespace mova {

namespace {
constexpr std::uint64_t kTokenSalt = 0x7E47E47E4ULL;
}

HashTextEncoder::HashTextEncoder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw ValidationError("text encoder: dimension must be >= 1");
}

TextToken HashTextEncoder::encode(const std::string& text) const {
    std::vector<double> acc(dim_, 0.0);
    std::istringstream words(text);
    std::string word;
    std::size_t count = 0;
    while (words >> word) {
        Rng rng(combine_seeds(kTokenSalt, hash_string(word)));
        auto v = normal_draws(rng, dim_);
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < dim_; ++i) acc[i] += v[i] / norm;
        ++count;
    }
    if (count == 0) return {acc};

    double norm = 0.0;
    for (auto& x : acc) {
        x /= static_cast<double>(count);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    // Antipodal word vectors can cancel exactly; leave the zero vector then.
    if (norm > 0.0) {
        for (auto& x : acc) x /= norm;
    }
    return {acc};
}

TextToken encode_text(const std::string& question, std::size_t text_dim) {
    return HashTextEncoder(text_dim).encode(question);
}

}  // namespace mova
