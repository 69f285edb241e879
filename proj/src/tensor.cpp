// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokencarve/tensor.hpp"

#include <cmath>
#include <string>

#include "tokencarve/errors.hpp"

namespace tokencarve {

namespace {

std::size_t checked_count(const std::vector<std::size_t>& dims) {
    if (dims.empty() || dims.size() > 3) {
        throw ShapeError("tensor must have 1 to 3 dims, got " + std::to_string(dims.size()));
    }
    std::size_t count = 1;
    for (std::size_t d : dims) {
        if (d == 0) {
            throw ShapeError("tensor dims must be positive");
        }
        count *= d;
    }
    return count;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    data_.assign(checked_count(dims_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    const std::size_t expected = checked_count(dims_);
    if (data_.size() != expected) {
        throw ShapeError("tensor payload length " + std::to_string(data_.size()) +
                         " does not match dims product " + std::to_string(expected));
    }
    check_finite("tensor construction");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        t.at(i, i) = 1.0;
    }
    return t;
}

std::size_t Tensor::rows() const {
    if (ndim() != 2) {
        throw ShapeError("rows() requires a 2-D tensor");
    }
    return dims_[0];
}

std::size_t Tensor::cols() const {
    if (ndim() != 2) {
        throw ShapeError("cols() requires a 2-D tensor");
    }
    return dims_[1];
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t count) const {
    const std::size_t r = rows();
    const std::size_t c = cols();
    if (begin + count > r) {
        throw ShapeError("row slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of bounds for " +
                         std::to_string(r) + " rows");
    }
    std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                            data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
    return Tensor({count, c}, std::move(out));
}

void Tensor::check_finite(const char* what) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(what) + ": non-finite value");
        }
    }
}

}  // namespace tokencarve
