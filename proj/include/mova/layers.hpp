// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable building blocks over token matrices (one token per row).
// Each forward optionally fills a cache; the matching backward accumulates
// parameter gradients into a same-shaped struct and returns input gradients.

#pragma once

#include <cstddef>
#include <vector>

#include "mova/numerics.hpp"

namespace mova {

/// y = x·weight + bias; weight is in x out, bias is 1 x out.
struct Linear {
    Matrix weight;
    Matrix bias;
};

Linear zeros_like(const Linear& p);
Matrix linear_forward(const Matrix& x, const Linear& p);
/// Adds dW, db into grad and returns dx.
Matrix linear_backward(const Matrix& x, const Linear& p, const Matrix& dy, Linear& grad);

/// tanh-approximated GELU.
double gelu(double x);
double gelu_derivative(double x);
Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& pre_activation, const Matrix& dy);

/// Per-token normalisation over the channel axis.
struct LayerNorm {
    Matrix scale;
    Matrix offset;
};

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
    Matrix normalized;
    std::vector<double> inv_std;
};

LayerNorm zeros_like(const LayerNorm& p);
Matrix layer_norm_forward(const Matrix& x, const LayerNorm& p, LayerNormCache* cache = nullptr);
Matrix layer_norm_backward(const LayerNormCache& cache, const LayerNorm& p, const Matrix& dy, LayerNorm& grad);

/// Projection set for one attention layer. Query/key/value map their inputs
/// to the shared width; output maps back.
struct Attention {
    Linear query;
    Linear key;
    Linear value;
    Linear output;
};

struct AttentionCache {
    Matrix query_in;
    Matrix kv_in;
    Matrix q;
    Matrix k;
    Matrix v;
    std::vector<Matrix> probs;  // one n_q x n_kv matrix per head
    Matrix mixed;               // concatenated head outputs before the output projection
};

Attention zeros_like(const Attention& p);

/// Output projection of multi-head attention (no residual). heads must divide
/// the projection width.
Matrix attention_forward(const Matrix& query_in, const Matrix& kv_in, const Attention& p, std::size_t heads,
                         AttentionCache* cache = nullptr);

struct AttentionInputGrads {
    Matrix query_in;
    Matrix kv_in;  // empty unless requested
};

AttentionInputGrads attention_backward(const AttentionCache& cache, const Attention& p, std::size_t heads,
                                       const Matrix& dy, Attention& grad, bool want_kv_grad);

/// In-place a += b (same shape).
void add_into(Matrix& a, const Matrix& b);

}  // namespace mova
