// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mova {

/// Instruction embedding shared by every adapter block.
struct TextToken {
    std::vector<double> values;

    bool operator==(const TextToken&) const = default;
};

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual std::size_t dim() const noexcept = 0;
    virtual TextToken encode(const std::string& text) const = 0;
};

/// Deterministic bag-of-words embedder: each whitespace token hashes to a
/// seeded random unit vector; the average is rescaled to unit norm. The empty
/// string maps to the zero vector.
class HashTextEncoder final : public TextEncoder {
public:
    explicit HashTextEncoder(std::size_t dim);
    std::size_t dim() const noexcept override { return dim_; }
    TextToken encode(const std::string& text) const override;

private:
    std::size_t dim_;
};

TextToken encode_text(const std::string& question, std::size_t text_dim);

}  // namespace mova
