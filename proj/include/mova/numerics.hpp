// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision kernels shared by every other module. All
// reductions run in a fixed left-to-right order so results are bitwise
// reproducible.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mova {

/// Rank-N dense array, row-major with the last dimension fastest.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims);
    Tensor(std::vector<std::size_t> dims, std::vector<double> data);

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool operator==(const Tensor&) const = default;

private:
    std::vector<std::size_t> dims_;
    std::vector<double> data_;
};

/// rows x cols, row-major. Token matrices put one spatial position per row.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    Tensor to_tensor() const;
    static Matrix from_tensor(const Tensor& t);

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// C x H x W feature map (channel-major).
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
    FeatureMap(std::size_t channels, std::size_t height, std::size_t width, std::vector<double> data);

    std::size_t channels() const noexcept { return channels_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::vector<std::size_t> dims() const { return {channels_, height_, width_}; }

    double& at(std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[(c * height_ + h) * width_ + w];
    }
    double at(std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[(c * height_ + h) * width_ + w];
    }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    Tensor to_tensor() const;
    static FeatureMap from_tensor(const Tensor& t);

    bool operator==(const FeatureMap&) const = default;

private:
    std::size_t channels_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

/// (H*W) x C token view of a feature map; token index is h*W + w.
Matrix to_tokens(const FeatureMap& f);
FeatureMap from_tokens(const Matrix& tokens, std::size_t height, std::size_t width);

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// Numerically stable softmax. Masked-out entries come back as exactly 0 and
/// never enter the max or the normaliser.
std::vector<double> softmax(std::span<const double> v, std::optional<std::span<const bool>> mask = std::nullopt);

/// Align-corners bilinear resize, channels independent.
FeatureMap bilinear_interpolate(const FeatureMap& f, std::size_t out_h, std::size_t out_w);

std::vector<double> global_avg_pool(const FeatureMap& f);

/// Mean of each 2x2 block. Throws ShapeError on odd extents.
FeatureMap avg_pool_2x(const FeatureMap& f);

/// Adaptive average pooling to out_h x out_w; region i spans
/// [floor(i*H/out), ceil((i+1)*H/out)).
FeatureMap adaptive_avg_pool(const FeatureMap& f, std::size_t out_h, std::size_t out_w);

/// softmax(q·kᵀ/√d)·v with rows softmaxed independently (single head).
Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v);

struct GradCheckReport {
    std::string op;
    double max_relative_error = 0.0;
    std::size_t compared = 0;
    double eps = 0.0;
    /// Flat index of the worst coordinate.
    std::size_t worst_index = 0;
};

/// Central-difference check of analytic_grad against scalar_fn around params.
/// scalar_fn receives a perturbed copy of params. Relative error uses a
/// max(|a|, |n|, 1e-8) denominator.
GradCheckReport finite_diff_check(const std::string& op, const Tensor& params,
                                  const std::function<double(const Tensor&)>& scalar_fn,
                                  const Tensor& analytic_grad, double eps);

/// Relative error as used by finite_diff_check.
double relative_error(double analytic, double numeric);

bool all_finite(std::span<const double> values);

}  // namespace mova
