// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mova/errors.hpp"

namespace mova {

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::string dims_str(const std::vector<std::size_t>& dims) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
    os << "]";
    return os.str();
}

std::string matrix_dims(const Matrix& m) { return dims_str(std::vector<std::size_t>{m.rows(), m.cols()}); }

void require_nonzero_extents(const std::vector<std::size_t>& dims, const char* what) {
    for (auto d : dims) {
        if (d == 0) throw ShapeError(std::string(what) + ": zero extent in " + dims_str(dims));
    }
}

}  // namespace

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)), data_(product(dims_), 0.0) {
    require_nonzero_extents(dims_, "tensor");
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    require_nonzero_extents(dims_, "tensor");
    if (product(dims_) != data_.size()) {
        throw ShapeError("tensor: dims " + dims_str(dims_) + " hold " + std::to_string(product(dims_)) +
                         " values, got " + std::to_string(data_.size()));
    }
    if (!all_finite(data_)) throw NumericError("tensor: non-finite value");
}

// ---------------------------------------------------------------- Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix: " + dims_str({rows, cols}) + " needs " + std::to_string(rows * cols) +
                         " values, got " + std::to_string(data_.size()));
    }
}

Tensor Matrix::to_tensor() const { return Tensor({rows_, cols_}, data_); }

Matrix Matrix::from_tensor(const Tensor& t) {
    if (t.rank() != 2) throw ShapeError("matrix from tensor: expected rank 2, got " + dims_str(t.dims()));
    return Matrix(t.dims()[0], t.dims()[1], std::vector<double>(t.data().begin(), t.data().end()));
}

// ---------------------------------------------------------------- FeatureMap

FeatureMap::FeatureMap(std::size_t channels, std::size_t height, std::size_t width, double fill)
    : channels_(channels), height_(height), width_(width), data_(channels * height * width, fill) {
    require_nonzero_extents({channels, height, width}, "feature map");
}

FeatureMap::FeatureMap(std::size_t channels, std::size_t height, std::size_t width, std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    require_nonzero_extents({channels, height, width}, "feature map");
    if (data_.size() != channels * height * width) {
        throw ShapeError("feature map: " + dims_str({channels, height, width}) + " needs " +
                         std::to_string(channels * height * width) + " values, got " + std::to_string(data_.size()));
    }
}

Tensor FeatureMap::to_tensor() const { return Tensor(dims(), data_); }

FeatureMap FeatureMap::from_tensor(const Tensor& t) {
    if (t.rank() != 3) throw ShapeError("feature map from tensor: expected rank 3, got " + dims_str(t.dims()));
    return FeatureMap(t.dims()[0], t.dims()[1], t.dims()[2], std::vector<double>(t.data().begin(), t.data().end()));
}

Matrix to_tokens(const FeatureMap& f) {
    const std::size_t hw = f.height() * f.width();
    Matrix out(hw, f.channels());
    for (std::size_t c = 0; c < f.channels(); ++c) {
        const double* src = f.data().data() + c * hw;
        for (std::size_t p = 0; p < hw; ++p) out(p, c) = src[p];
    }
    return out;
}

FeatureMap from_tokens(const Matrix& tokens, std::size_t height, std::size_t width) {
    if (tokens.rows() != height * width) {
        throw ShapeError("from_tokens: " + std::to_string(tokens.rows()) + " tokens cannot fill " +
                         std::to_string(height) + "x" + std::to_string(width));
    }
    FeatureMap out(tokens.cols(), height, width);
    const std::size_t hw = height * width;
    for (std::size_t c = 0; c < tokens.cols(); ++c) {
        double* dst = out.data().data() + c * hw;
        for (std::size_t p = 0; p < hw; ++p) dst[p] = tokens(p, c);
    }
    return out;
}

// ---------------------------------------------------------------- products

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner extents differ, a " + matrix_dims(a) + " vs b " + matrix_dims(b));
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double* out = c.row(r).data();
        for (std::size_t t = 0; t < a.cols(); ++t) {
            const double s = a(r, t);
            const double* brow = b.row(t).data();
            for (std::size_t j = 0; j < b.cols(); ++j) out[j] += s * brow[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: row extents differ, a " + matrix_dims(a) + " vs b " + matrix_dims(b));
    }
    Matrix c(a.cols(), b.cols());
    for (std::size_t t = 0; t < a.rows(); ++t) {
        const double* arow = a.row(t).data();
        const double* brow = b.row(t).data();
        for (std::size_t r = 0; r < a.cols(); ++r) {
            const double s = arow[r];
            double* out = c.row(r).data();
            for (std::size_t j = 0; j < b.cols(); ++j) out[j] += s * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: column extents differ, a " + matrix_dims(a) + " vs b " + matrix_dims(b));
    }
    Matrix c(a.rows(), b.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* arow = a.row(r).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.row(j).data();
            double acc = 0.0;
            for (std::size_t t = 0; t < a.cols(); ++t) acc += arow[t] * brow[t];
            c(r, j) = acc;
        }
    }
    return c;
}

// ---------------------------------------------------------------- softmax

std::vector<double> softmax(std::span<const double> v, std::optional<std::span<const bool>> mask) {
    if (mask && mask->size() != v.size()) {
        throw ShapeError("softmax: mask length " + std::to_string(mask->size()) + " vs input length " +
                         std::to_string(v.size()));
    }
    auto active = [&](std::size_t i) { return !mask || (*mask)[i]; };

    double peak = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!active(i)) continue;
        any = true;
        peak = std::max(peak, v[i]);
    }
    if (!any) throw ValidationError("softmax: empty support (no unmasked entries)");

    std::vector<double> out(v.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!active(i)) continue;
        out[i] = std::exp(v[i] - peak);
        total += out[i];
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (active(i)) out[i] /= total;
    }
    return out;
}

// ---------------------------------------------------------------- spatial ops

namespace {

struct Tap {
    std::size_t lo;
    std::size_t hi;
    double frac;
};

std::vector<Tap> align_corner_taps(std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    for (std::size_t p = 0; p < out; ++p) {
        const double src =
            out == 1 ? 0.0 : static_cast<double>(p * (in - 1)) / static_cast<double>(out - 1);
        auto lo = static_cast<std::size_t>(std::floor(src));
        lo = std::min(lo, in - 1);
        const std::size_t hi = std::min(lo + 1, in - 1);
        taps[p] = {lo, hi, src - static_cast<double>(lo)};
    }
    return taps;
}

}  // namespace

FeatureMap bilinear_interpolate(const FeatureMap& f, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_interpolate: output extents must be >= 1");
    if (out_h == f.height() && out_w == f.width()) return f;

    const auto ys = align_corner_taps(f.height(), out_h);
    const auto xs = align_corner_taps(f.width(), out_w);
    FeatureMap out(f.channels(), out_h, out_w);
    for (std::size_t c = 0; c < f.channels(); ++c) {
        for (std::size_t y = 0; y < out_h; ++y) {
            const Tap& ty = ys[y];
            for (std::size_t x = 0; x < out_w; ++x) {
                const Tap& tx = xs[x];
                const double top = (1.0 - tx.frac) * f.at(c, ty.lo, tx.lo) + tx.frac * f.at(c, ty.lo, tx.hi);
                const double bottom = (1.0 - tx.frac) * f.at(c, ty.hi, tx.lo) + tx.frac * f.at(c, ty.hi, tx.hi);
                out.at(c, y, x) = (1.0 - ty.frac) * top + ty.frac * bottom;
            }
        }
    }
    return out;
}

std::vector<double> global_avg_pool(const FeatureMap& f) {
    const std::size_t hw = f.height() * f.width();
    std::vector<double> out(f.channels());
    for (std::size_t c = 0; c < f.channels(); ++c) {
        const double* src = f.data().data() + c * hw;
        double acc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) acc += src[p];
        out[c] = acc / static_cast<double>(hw);
    }
    return out;
}

FeatureMap avg_pool_2x(const FeatureMap& f) {
    if (f.height() % 2 != 0 || f.width() % 2 != 0) {
        throw ShapeError("avg_pool_2x: extents must be even, got " + std::to_string(f.height()) + "x" +
                         std::to_string(f.width()));
    }
    FeatureMap out(f.channels(), f.height() / 2, f.width() / 2);
    for (std::size_t c = 0; c < f.channels(); ++c) {
        for (std::size_t y = 0; y < out.height(); ++y) {
            for (std::size_t x = 0; x < out.width(); ++x) {
                const double s = f.at(c, 2 * y, 2 * x) + f.at(c, 2 * y, 2 * x + 1) + f.at(c, 2 * y + 1, 2 * x) +
                                 f.at(c, 2 * y + 1, 2 * x + 1);
                out.at(c, y, x) = s / 4.0;
            }
        }
    }
    return out;
}

FeatureMap adaptive_avg_pool(const FeatureMap& f, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ShapeError("adaptive_avg_pool: output extents must be >= 1");
    if (out_h > f.height() || out_w > f.width()) {
        throw ShapeError("adaptive_avg_pool: grid " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                         " exceeds input " + std::to_string(f.height()) + "x" + std::to_string(f.width()));
    }
    auto start = [](std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; };
    auto stop = [](std::size_t i, std::size_t in, std::size_t out) { return ((i + 1) * in + out - 1) / out; };

    FeatureMap out(f.channels(), out_h, out_w);
    for (std::size_t c = 0; c < f.channels(); ++c) {
        for (std::size_t y = 0; y < out_h; ++y) {
            const std::size_t y0 = start(y, f.height(), out_h), y1 = stop(y, f.height(), out_h);
            for (std::size_t x = 0; x < out_w; ++x) {
                const std::size_t x0 = start(x, f.width(), out_w), x1 = stop(x, f.width(), out_w);
                double acc = 0.0;
                for (std::size_t yy = y0; yy < y1; ++yy) {
                    for (std::size_t xx = x0; xx < x1; ++xx) acc += f.at(c, yy, xx);
                }
                out.at(c, y, x) = acc / static_cast<double>((y1 - y0) * (x1 - x0));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- attention

Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
    if (q.cols() != k.cols()) {
        throw ShapeError("attention: query " + matrix_dims(q) + " and key " + matrix_dims(k) + " widths differ");
    }
    if (k.rows() != v.rows()) {
        throw ShapeError("attention: key " + matrix_dims(k) + " and value " + matrix_dims(v) + " token counts differ");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Matrix scores = matmul_nt(q, k);
    for (std::size_t r = 0; r < scores.rows(); ++r) {
        auto row = scores.row(r);
        for (auto& s : row) s *= scale;
        const auto probs = softmax(row);
        std::copy(probs.begin(), probs.end(), row.begin());
    }
    return matmul(scores, v);
}

// ---------------------------------------------------------------- gradcheck

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(const std::string& op, const Tensor& params,
                                  const std::function<double(const Tensor&)>& scalar_fn,
                                  const Tensor& analytic_grad, double eps) {
    if (analytic_grad.dims() != params.dims()) {
        throw ShapeError("finite_diff_check(" + op + "): gradient dims " + dims_str(analytic_grad.dims()) +
                         " vs parameter dims " + dims_str(params.dims()));
    }
    if (!(eps > 0.0)) throw ValidationError("finite_diff_check(" + op + "): eps must be positive");

    GradCheckReport report{op, 0.0, params.size(), eps, 0};
    Tensor probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double original = params.data()[i];
        probe.data()[i] = original + eps;
        const double up = scalar_fn(probe);
        probe.data()[i] = original - eps;
        const double down = scalar_fn(probe);
        probe.data()[i] = original;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("finite_diff_check(" + op + "): non-finite function value at probe index " +
                               std::to_string(i));
        }
        const double numeric = (up - down) / (2.0 * eps);
        const double err = relative_error(analytic_grad.data()[i], numeric);
        if (err > report.max_relative_error) {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    return report;
}

}  // namespace mova
