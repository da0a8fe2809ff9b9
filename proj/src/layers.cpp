// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/layers.hpp"

#include <cmath>
#include <numbers>

#include "mova/errors.hpp"

namespace mova {

void add_into(Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add_into: shape mismatch");
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

// ---------------------------------------------------------------- linear

Linear zeros_like(const Linear& p) {
    return {Matrix(p.weight.rows(), p.weight.cols()), Matrix(p.bias.rows(), p.bias.cols())};
}

Matrix linear_forward(const Matrix& x, const Linear& p) {
    Matrix y = matmul(x, p.weight);
    const double* b = p.bias.data().data();
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
    return y;
}

Matrix linear_backward(const Matrix& x, const Linear& p, const Matrix& dy, Linear& grad) {
    add_into(grad.weight, matmul_tn(x, dy));
    double* db = grad.bias.data().data();
    for (std::size_t r = 0; r < dy.rows(); ++r) {
        auto row = dy.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
    }
    return matmul_nt(dy, p.weight);
}

// ---------------------------------------------------------------- gelu

namespace {
constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

double gelu(double x) {
    const double t = std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x));
    return 0.5 * x * (1.0 + t);
}

double gelu_derivative(double x) {
    const double t = std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
}

Matrix gelu(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    auto xd = x.data();
    auto yd = y.data();
    for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = gelu(xd[i]);
    return y;
}

Matrix gelu_backward(const Matrix& pre_activation, const Matrix& dy) {
    Matrix dx(dy.rows(), dy.cols());
    auto pd = pre_activation.data();
    auto gd = dy.data();
    auto out = dx.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gd[i] * gelu_derivative(pd[i]);
    return dx;
}

// ---------------------------------------------------------------- layer norm

LayerNorm zeros_like(const LayerNorm& p) {
    return {Matrix(p.scale.rows(), p.scale.cols()), Matrix(p.offset.rows(), p.offset.cols())};
}

Matrix layer_norm_forward(const Matrix& x, const LayerNorm& p, LayerNormCache* cache) {
    const std::size_t n = x.rows(), c = x.cols();
    Matrix y(n, c);
    if (cache) {
        cache->normalized = Matrix(n, c);
        cache->inv_std.assign(n, 0.0);
    }
    const double* gamma = p.scale.data().data();
    const double* beta = p.offset.data().data();
    for (std::size_t r = 0; r < n; ++r) {
        auto row = x.row(r);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(c);
        const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t j = 0; j < c; ++j) {
            const double xhat = (row[j] - mean) * inv_std;
            if (cache) cache->normalized(r, j) = xhat;
            y(r, j) = gamma[j] * xhat + beta[j];
        }
        if (cache) cache->inv_std[r] = inv_std;
    }
    return y;
}

Matrix layer_norm_backward(const LayerNormCache& cache, const LayerNorm& p, const Matrix& dy, LayerNorm& grad) {
    const std::size_t n = dy.rows(), c = dy.cols();
    Matrix dx(n, c);
    const double* gamma = p.scale.data().data();
    double* dgamma = grad.scale.data().data();
    double* dbeta = grad.offset.data().data();
    std::vector<double> dxhat(c);
    for (std::size_t r = 0; r < n; ++r) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double g = dy(r, j);
            const double xhat = cache.normalized(r, j);
            dgamma[j] += g * xhat;
            dbeta[j] += g;
            dxhat[j] = g * gamma[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat;
        }
        mean_d /= static_cast<double>(c);
        mean_dx /= static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) {
            dx(r, j) = cache.inv_std[r] * (dxhat[j] - mean_d - cache.normalized(r, j) * mean_dx);
        }
    }
    return dx;
}

// ---------------------------------------------------------------- attention

namespace {

Matrix column_block(const Matrix& m, std::size_t start, std::size_t width) {
    Matrix out(m.rows(), width);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t j = 0; j < width; ++j) out(r, j) = m(r, start + j);
    }
    return out;
}

void write_column_block(Matrix& m, const Matrix& block, std::size_t start) {
    for (std::size_t r = 0; r < block.rows(); ++r) {
        for (std::size_t j = 0; j < block.cols(); ++j) m(r, start + j) = block(r, j);
    }
}

std::size_t head_width(std::size_t width, std::size_t heads) {
    if (heads == 0 || width % heads != 0) {
        throw ShapeError("attention: width " + std::to_string(width) + " is not divisible by " +
                         std::to_string(heads) + " heads");
    }
    return width / heads;
}

}  // namespace

Attention zeros_like(const Attention& p) {
    return {zeros_like(p.query), zeros_like(p.key), zeros_like(p.value), zeros_like(p.output)};
}

Matrix attention_forward(const Matrix& query_in, const Matrix& kv_in, const Attention& p, std::size_t heads,
                         AttentionCache* cache) {
    Matrix q = linear_forward(query_in, p.query);
    Matrix k = linear_forward(kv_in, p.key);
    Matrix v = linear_forward(kv_in, p.value);
    if (q.cols() != k.cols() || k.cols() != v.cols()) throw ShapeError("attention: projection widths differ");
    const std::size_t dh = head_width(q.cols(), heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix mixed(q.rows(), v.cols());
    std::vector<Matrix> probs;
    probs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix qh = heads == 1 ? q : column_block(q, h * dh, dh);
        const Matrix kh = heads == 1 ? k : column_block(k, h * dh, dh);
        const Matrix vh = heads == 1 ? v : column_block(v, h * dh, dh);
        Matrix scores = matmul_nt(qh, kh);
        for (std::size_t r = 0; r < scores.rows(); ++r) {
            auto row = scores.row(r);
            for (auto& s : row) s *= scale;
            const auto pr = softmax(row);
            std::copy(pr.begin(), pr.end(), row.begin());
        }
        if (heads == 1) {
            mixed = matmul(scores, vh);
        } else {
            write_column_block(mixed, matmul(scores, vh), h * dh);
        }
        probs.push_back(std::move(scores));
    }
    Matrix out = linear_forward(mixed, p.output);
    if (cache) {
        cache->query_in = query_in;
        cache->kv_in = kv_in;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->probs = std::move(probs);
        cache->mixed = std::move(mixed);
    }
    return out;
}

AttentionInputGrads attention_backward(const AttentionCache& cache, const Attention& p, std::size_t heads,
                                       const Matrix& dy, Attention& grad, bool want_kv_grad) {
    const Matrix d_mixed = linear_backward(cache.mixed, p.output, dy, grad.output);
    const std::size_t width = cache.q.cols();
    const std::size_t dh = head_width(width, heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix dq(cache.q.rows(), width), dk(cache.k.rows(), width), dv(cache.v.rows(), width);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix& prob = cache.probs[h];
        const Matrix qh = heads == 1 ? cache.q : column_block(cache.q, h * dh, dh);
        const Matrix kh = heads == 1 ? cache.k : column_block(cache.k, h * dh, dh);
        const Matrix vh = heads == 1 ? cache.v : column_block(cache.v, h * dh, dh);
        const Matrix doh = heads == 1 ? d_mixed : column_block(d_mixed, h * dh, dh);

        const Matrix dvh = matmul_tn(prob, doh);
        Matrix ds = matmul_nt(doh, vh);  // dL/dprob, turned into dL/dscore below
        for (std::size_t r = 0; r < ds.rows(); ++r) {
            auto drow = ds.row(r);
            auto prow = prob.row(r);
            double dot = 0.0;
            for (std::size_t j = 0; j < drow.size(); ++j) dot += drow[j] * prow[j];
            for (std::size_t j = 0; j < drow.size(); ++j) drow[j] = prow[j] * (drow[j] - dot) * scale;
        }
        const Matrix dqh = matmul(ds, kh);
        const Matrix dkh = matmul_tn(ds, qh);
        write_column_block(dq, dqh, h * dh);
        write_column_block(dk, dkh, h * dh);
        write_column_block(dv, dvh, h * dh);
    }

    AttentionInputGrads out;
    out.query_in = linear_backward(cache.query_in, p.query, dq, grad.query);
    Matrix dkv_k = linear_backward(cache.kv_in, p.key, dk, grad.key);
    Matrix dkv_v = linear_backward(cache.kv_in, p.value, dv, grad.value);
    if (want_kv_grad) {
        add_into(dkv_k, dkv_v);
        out.kv_in = std::move(dkv_k);
    }
    return out;
}

}  // namespace mova
