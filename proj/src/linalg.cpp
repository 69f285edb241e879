// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokencarve/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tokencarve/errors.hpp"

namespace tokencarve::linalg {

namespace {

constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

// Convergence threshold for one-sided Jacobi: a column pair counts as
// orthogonal when |w_p . w_q| <= kJacobiTol * |w_p| * |w_q|.
constexpr double kJacobiTol = 1e-15;
constexpr int kJacobiMaxSweeps = 100;

// Column-major workspace: column j of an (m x n) matrix lives at
// [j * m, (j + 1) * m). Contiguous columns keep the rotation loops tight.
struct ColMatrix {
    std::size_t m = 0;
    std::size_t n = 0;
    std::vector<double> a;

    ColMatrix(std::size_t rows, std::size_t cols) : m(rows), n(cols), a(rows * cols, 0.0) {}

    double* col(std::size_t j) { return a.data() + j * m; }
    const double* col(std::size_t j) const { return a.data() + j * m; }
};

double dot(const double* x, const double* y, std::size_t len) {
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        acc += x[i] * y[i];
    }
    return acc;
}

void rotate_pair(double* p, double* q, std::size_t len, double c, double s) {
    for (std::size_t i = 0; i < len; ++i) {
        const double vp = p[i];
        const double vq = q[i];
        p[i] = c * vp - s * vq;
        q[i] = s * vp + c * vq;
    }
}

// One-sided Jacobi on the columns of w (m x n, m >= n is not required here;
// the caller arranges the tall orientation). Accumulates rotations into v
// (n x n, starts as identity). After convergence the columns of w are
// mutually orthogonal and w = u * diag(sigma) * v^T with sigma = column norms.
void jacobi_orthogonalize(ColMatrix& w, ColMatrix& v) {
    const std::size_t n = w.n;
    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double* wp = w.col(p);
                double* wq = w.col(q);
                const double alpha = dot(wp, wp, w.m);
                const double beta = dot(wq, wq, w.m);
                if (alpha == 0.0 || beta == 0.0) {
                    continue;
                }
                const double gamma = dot(wp, wq, w.m);
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha) * std::sqrt(beta)) {
                    continue;
                }
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t =
                    (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate_pair(wp, wq, w.m, c, s);
                rotate_pair(v.col(p), v.col(q), v.m, c, s);
                rotated = true;
            }
        }
        if (!rotated) {
            return;
        }
    }
    throw NumericError("svd: Jacobi sweeps did not converge after " +
                       std::to_string(kJacobiMaxSweeps) + " iterations");
}

// Fill every column of u listed in `missing` with unit vectors orthogonal to
// all currently placed columns. Candidates are standard basis vectors tried
// behind a monotone cursor, so a rejected (already spanned) candidate is not
// rescanned for every slot; deterministic either way.
void complete_orthonormal_columns(ColMatrix& u, std::vector<bool>& placed,
                                  const std::vector<std::size_t>& missing) {
    const std::size_t m = u.m;
    std::vector<double> cand(m);
    auto project_out = [&](std::vector<double>& vec) {
        for (std::size_t j = 0; j < u.n; ++j) {
            if (!placed[j]) {
                continue;
            }
            const double coef = dot(u.col(j), vec.data(), m);
            const double* cj = u.col(j);
            for (std::size_t i = 0; i < m; ++i) {
                vec[i] -= coef * cj[i];
            }
        }
    };
    auto load_candidate = [&](std::size_t k) {
        std::fill(cand.begin(), cand.end(), 0.0);
        cand[k] = 1.0;
        project_out(cand);
        return dot(cand.data(), cand.data(), m);
    };

    std::size_t cursor = 0;
    for (std::size_t slot : missing) {
        bool accepted = false;
        while (cursor < m) {
            if (load_candidate(cursor) >= 0.25) {
                accepted = true;
                ++cursor;  // this basis vector is consumed by the new column
                break;
            }
            ++cursor;
        }
        if (!accepted) {
            // Rare: every remaining basis vector lies mostly in the span.
            // Take the best residual over the whole basis.
            std::size_t best_k = 0;
            double best_norm2 = -1.0;
            for (std::size_t k = 0; k < m; ++k) {
                const double norm2 = load_candidate(k);
                if (norm2 > best_norm2) {
                    best_norm2 = norm2;
                    best_k = k;
                }
            }
            (void)load_candidate(best_k);
        }
        // Second orthogonalization pass cleans up rounding before normalizing.
        project_out(cand);
        const double norm = std::sqrt(dot(cand.data(), cand.data(), m));
        if (norm == 0.0) {
            throw NumericError("svd: failed to complete an orthonormal basis");
        }
        double* dst = u.col(slot);
        for (std::size_t i = 0; i < m; ++i) {
            dst[i] = cand[i] / norm;
        }
        placed[slot] = true;
    }
}

// SVD of a matrix given in column-major form, m >= n. Returns full u (m x m),
// sigma (length n, descending) and v (n x n, columns are right singular
// vectors).
void svd_tall(const ColMatrix& input, ColMatrix& u_out, std::vector<double>& sigma,
              ColMatrix& v_out) {
    const std::size_t m = input.m;
    const std::size_t n = input.n;

    ColMatrix w = input;
    ColMatrix v(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        v.col(j)[j] = 1.0;
    }
    jacobi_orthogonalize(w, v);

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        norms[j] = std::sqrt(dot(w.col(j), w.col(j), m));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    sigma.resize(n);
    u_out = ColMatrix(m, m);
    v_out = ColMatrix(n, n);
    std::vector<bool> placed(m, false);
    std::vector<std::size_t> missing;

    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        sigma[j] = norms[src];
        std::copy(v.col(src), v.col(src) + n, v_out.col(j));
        if (sigma[j] > 0.0) {
            const double inv = 1.0 / sigma[j];
            const double* wc = w.col(src);
            double* uc = u_out.col(j);
            for (std::size_t i = 0; i < m; ++i) {
                uc[i] = wc[i] * inv;
            }
            placed[j] = true;
        } else {
            missing.push_back(j);
        }
    }
    for (std::size_t j = n; j < m; ++j) {
        missing.push_back(j);
    }
    complete_orthonormal_columns(u_out, placed, missing);
}

// First nonzero component of each u column is made non-negative; the paired
// v column flips along with it so the product is unchanged.
void apply_sign_convention(ColMatrix& u, ColMatrix& v, std::size_t pairs) {
    for (std::size_t j = 0; j < u.n; ++j) {
        const double* uc = u.col(j);
        double lead = 0.0;
        for (std::size_t i = 0; i < u.m; ++i) {
            if (uc[i] != 0.0) {
                lead = uc[i];
                break;
            }
        }
        if (lead >= 0.0) {
            continue;
        }
        double* ucm = u.col(j);
        for (std::size_t i = 0; i < u.m; ++i) {
            ucm[i] = -ucm[i];
        }
        if (j < pairs) {
            double* vc = v.col(j);
            for (std::size_t i = 0; i < v.m; ++i) {
                vc[i] = -vc[i];
            }
        }
    }
}

Tensor cols_to_tensor(const ColMatrix& c) {
    Tensor t({c.m, c.n});
    for (std::size_t j = 0; j < c.n; ++j) {
        const double* cj = c.col(j);
        for (std::size_t i = 0; i < c.m; ++i) {
            t.at(i, j) = cj[i];
        }
    }
    return t;
}

Tensor cols_to_tensor_transposed(const ColMatrix& c) {
    Tensor t({c.n, c.m});
    for (std::size_t j = 0; j < c.n; ++j) {
        const double* cj = c.col(j);
        for (std::size_t i = 0; i < c.m; ++i) {
            t.at(j, i) = cj[i];
        }
    }
    return t;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dims disagree (" + std::to_string(k) + " vs " +
                         std::to_string(b.rows()) + ")");
    }
    const std::size_t n = b.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* oi = out.row(i).data();
        const double* ai = a.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b.row(p).data();
            for (std::size_t j = 0; j < n; ++j) {
                oi[j] += av * bp[j];
            }
        }
    }
    return out;
}

Tensor matmul_transposed_b(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    if (b.cols() != k) {
        throw ShapeError("matmul_transposed_b: inner dims disagree (" + std::to_string(k) +
                         " vs " + std::to_string(b.cols()) + ")");
    }
    const std::size_t n = b.rows();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.row(i).data();
        double* oi = out.row(i).data();
        for (std::size_t j = 0; j < n; ++j) {
            oi[j] = dot(ai, b.row(j).data(), k);
        }
    }
    return out;
}

Tensor softmax_rows(const Tensor& m) {
    const std::size_t r = m.rows();
    const std::size_t c = m.cols();
    m.check_finite("softmax_rows");
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        const double* src = m.row(i).data();
        double* dst = out.row(i).data();
        const double row_max = *std::max_element(src, src + c);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            dst[j] = std::exp(src[j] - row_max);
            sum += dst[j];
        }
        for (std::size_t j = 0; j < c; ++j) {
            dst[j] /= sum;
        }
    }
    return out;
}

SvdResult svd(const Tensor& m) {
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    m.check_finite("svd");

    const bool transposed = rows < cols;
    const std::size_t tm = transposed ? cols : rows;
    const std::size_t tn = transposed ? rows : cols;

    ColMatrix input(tm, tn);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (transposed) {
                input.col(i)[j] = m.at(i, j);
            } else {
                input.col(j)[i] = m.at(i, j);
            }
        }
    }

    ColMatrix u_work(1, 1), v_work(1, 1);
    std::vector<double> sigma;
    svd_tall(input, u_work, sigma, v_work);

    SvdResult out;
    out.sigma = std::move(sigma);
    if (transposed) {
        // m = (v_work) * diag(sigma) * (u_work)^T after the swap.
        apply_sign_convention(v_work, u_work, out.sigma.size());
        out.u = cols_to_tensor(v_work);
        out.vt = cols_to_tensor_transposed(u_work);
    } else {
        apply_sign_convention(u_work, v_work, out.sigma.size());
        out.u = cols_to_tensor(u_work);
        out.vt = cols_to_tensor_transposed(v_work);
    }
    return out;
}

SvdEconResult svd_econ(const Tensor& m) {
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    m.check_finite("svd");

    SvdEconResult out;
    if (rows >= cols) {
        ColMatrix w(rows, cols);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                w.col(j)[i] = m.at(i, j);
            }
        }
        ColMatrix v(cols, cols);
        for (std::size_t j = 0; j < cols; ++j) {
            v.col(j)[j] = 1.0;
        }
        jacobi_orthogonalize(w, v);

        std::vector<double> norms(cols);
        for (std::size_t j = 0; j < cols; ++j) {
            norms[j] = std::sqrt(dot(w.col(j), w.col(j), rows));
        }
        std::vector<std::size_t> order(cols);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
        out.sigma.resize(cols);
        out.u = Tensor({rows, cols});
        for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t src = order[j];
            out.sigma[j] = norms[src];
            if (out.sigma[j] > 0.0) {
                const double inv = 1.0 / out.sigma[j];
                for (std::size_t i = 0; i < rows; ++i) {
                    out.u.at(i, j) = w.col(src)[i] * inv;
                }
            }
        }
    } else {
        // For wide input work on the transpose: the rotation accumulator of
        // the transposed problem is exactly the left factor wanted here.
        ColMatrix w(cols, rows);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                w.col(i)[j] = m.at(i, j);
            }
        }
        ColMatrix v(rows, rows);
        for (std::size_t j = 0; j < rows; ++j) {
            v.col(j)[j] = 1.0;
        }
        jacobi_orthogonalize(w, v);

        std::vector<double> norms(rows);
        for (std::size_t j = 0; j < rows; ++j) {
            norms[j] = std::sqrt(dot(w.col(j), w.col(j), cols));
        }
        std::vector<std::size_t> order(rows);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
        out.sigma.resize(rows);
        out.u = Tensor({rows, rows});
        for (std::size_t j = 0; j < rows; ++j) {
            const std::size_t src = order[j];
            out.sigma[j] = norms[src];
            for (std::size_t i = 0; i < rows; ++i) {
                out.u.at(i, j) = v.col(src)[i];
            }
        }
    }
    return out;
}

std::size_t rank_from_sigma(const std::vector<double>& sigma, std::size_t rows, std::size_t cols,
                            double rel_tol) {
    if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
        throw ConfigError("numerical_rank: rel_tol must lie in (0, 1)");
    }
    if (sigma.empty() || sigma.front() == 0.0) {
        return 0;
    }
    const double floor_tol = static_cast<double>(std::max(rows, cols)) * kMachineEps;
    const double threshold = sigma.front() * std::max(rel_tol, floor_tol);
    std::size_t count = 0;
    for (double s : sigma) {
        if (s > threshold) {
            ++count;
        }
    }
    return count;
}

std::size_t numerical_rank(const Tensor& m, double rel_tol) {
    if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
        throw ConfigError("numerical_rank: rel_tol must lie in (0, 1)");
    }
    const SvdEconResult decomp = svd_econ(m);
    return rank_from_sigma(decomp.sigma, m.rows(), m.cols(), rel_tol);
}

RowNormalizeResult l2_normalize_rows(const Tensor& m) {
    const std::size_t r = m.rows();
    const std::size_t c = m.cols();
    RowNormalizeResult res{Tensor({r, c}), {}};
    for (std::size_t i = 0; i < r; ++i) {
        const double* src = m.row(i).data();
        double* dst = res.normalized.row(i).data();
        const double norm = std::sqrt(dot(src, src, c));
        if (norm <= std::numeric_limits<double>::min()) {
            std::copy(src, src + c, dst);
            res.zero_rows.push_back(i);
            continue;
        }
        for (std::size_t j = 0; j < c; ++j) {
            dst[j] = src[j] / norm;
        }
    }
    return res;
}

}  // namespace tokencarve::linalg
