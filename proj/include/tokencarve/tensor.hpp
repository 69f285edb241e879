// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace tokencarve {

/// Dense row-major array of doubles with 1 to 3 dimensions.
///
/// The universal carrier for embeddings, attention maps and score vectors.
/// Construction validates that the payload length matches the dims and that
/// every value is finite.
class Tensor {
  public:
    Tensor() = default;

    /// Zero-filled tensor of the given dims.
    explicit Tensor(std::vector<std::size_t> dims);

    /// Tensor wrapping the given payload; throws ShapeError when the payload
    /// length does not match the dims and NumericError on non-finite values.
    Tensor(std::vector<std::size_t> dims, std::vector<double> data);

    static Tensor matrix(std::size_t rows, std::size_t cols);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t ndim() const { return dims_.size(); }
    std::size_t size() const { return data_.size(); }

    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }

    std::span<double> row(std::size_t i) { return {data_.data() + i * dims_[1], dims_[1]}; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * dims_[1], dims_[1]};
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    /// Rows [begin, begin+count) of a 2-D tensor as a new tensor.
    Tensor slice_rows(std::size_t begin, std::size_t count) const;

    /// Throws NumericError if any value is NaN or infinite.
    void check_finite(const char* what) const;

    bool operator==(const Tensor& other) const = default;

  private:
    std::vector<std::size_t> dims_;
    std::vector<double> data_;
};

}  // namespace tokencarve
