// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "tokencarve/tensor.hpp"

namespace tokencarve::linalg {

/// Default relative cutoff for numerical rank: sigma_i counts while
/// sigma_i > rel_tol * sigma_max (an absolute floor of
/// max(m, n) * sigma_max * machine-epsilon always applies on top).
inline constexpr double kDefaultRankRelTol = 1e-10;

/// Full singular value decomposition a = u * diag(sigma) * vt with
/// u (m x m) and vt (n x n) orthogonal and sigma descending, length min(m, n).
struct SvdResult {
    Tensor u;
    std::vector<double> sigma;
    Tensor vt;
};

/// Left singular vectors and singular values only, u being m x min(m, n).
/// Columns whose singular value is exactly zero are left as zero vectors.
struct SvdEconResult {
    Tensor u;
    std::vector<double> sigma;
};

/// Result of l2_normalize_rows; zero rows pass through and are listed.
struct RowNormalizeResult {
    Tensor normalized;
    std::vector<std::size_t> zero_rows;
};

/// Standard matrix product (m x k) * (k x n). Throws ShapeError on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// (m x n) * (p x n)^T without materializing the transpose.
Tensor matmul_transposed_b(const Tensor& a, const Tensor& b);

/// Row-wise softmax, stabilized by per-row max subtraction. Each output row
/// is non-negative and sums to 1.
Tensor softmax_rows(const Tensor& m);

/// Full SVD via one-sided Jacobi rotations.
///
/// Deterministic for a fixed input: singular values are sorted descending and
/// each column of u has its first nonzero component made non-negative (the
/// paired v column is flipped along with it). Throws NumericError if the
/// sweep cap is exceeded.
SvdResult svd(const Tensor& m);

/// As svd but skips the right factor and the null-space completion of u;
/// cheaper when only sigma and the leading left vectors matter.
SvdEconResult svd_econ(const Tensor& m);

/// Count of singular values above max(rel_tol, max(m,n)*eps) * sigma_max.
/// rel_tol must lie in (0, 1). The zero matrix has rank 0.
std::size_t numerical_rank(const Tensor& m, double rel_tol = kDefaultRankRelTol);

/// As numerical_rank but reusing an already computed spectrum.
std::size_t rank_from_sigma(const std::vector<double>& sigma, std::size_t rows, std::size_t cols,
                            double rel_tol = kDefaultRankRelTol);

/// Scale each nonzero row of a 2-D tensor to unit L2 norm. Zero rows pass
/// through unchanged and are reported in the result.
RowNormalizeResult l2_normalize_rows(const Tensor& m);

}  // namespace tokencarve::linalg
