#pragma once

#include "idm/common.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <vector>

namespace idm {

// Evaluation-side utilities. Eigenfunctions over repeated eigenvalues are
// canonical only up to an orthogonal mixing, so cross-run comparisons
// first align each near-degenerate block by Procrustes. Nothing here is
// ever used inside the pipeline itself.

/// Groups consecutive mode indices whose values agree within rel_gap.
inline std::vector<std::pair<int, int>> degenerate_blocks(const Vector& values, int count,
                                                          double rel_gap = 0.01) {
    std::vector<std::pair<int, int>> blocks;
    int start = 0;
    for (int r = 1; r <= count; ++r) {
        bool split = (r == count);
        if (!split) {
            double a = values(start), b = values(r);
            double scale = std::max({std::abs(a), std::abs(b), 1e-12});
            split = std::abs(a - b) > rel_gap * scale;
        }
        if (split) {
            blocks.emplace_back(start, r);
            start = r;
        }
    }
    return blocks;
}

/// Singular values of a tall matrix through its Gram matrix. Stable on
/// effectively low-rank inputs where bidiagonal divide-and-conquer can
/// assert out.
inline Vector principal_values(const Matrix& x) {
    Matrix gram = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    Vector vals = eig.eigenvalues().reverse();
    return vals.cwiseMax(0.0).cwiseSqrt();
}

/// Orthogonal Procrustes: the Q with orthonormal columns minimizing
/// ||X Q - Ref||_F.
inline Matrix procrustes(const Matrix& x, const Matrix& ref) {
    Eigen::JacobiSVD<Matrix> svd(x.transpose() * ref, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

inline double pearson(const Vector& a, const Vector& b) {
    Vector ac = a.array() - a.mean();
    Vector bc = b.array() - b.mean();
    double den = ac.norm() * bc.norm();
    if (den == 0.0) return 0.0;
    return ac.dot(bc) / den;
}

struct AlignmentResult {
    Matrix aligned;                           // columns of x after block alignment
    std::vector<std::pair<int, int>> blocks;  // [first, last) column ranges
    Vector correlations;                      // per-column Pearson vs reference
};

/// Aligns the first `count` columns of x to ref, block by block, where the
/// blocks come from near-equal entries of `values` (eigenvalues of the
/// reference pass).
inline AlignmentResult align_blocks(const Matrix& x, const Matrix& ref, const Vector& values,
                                    int count, double rel_gap = 0.01) {
    if (x.rows() != ref.rows()) throw ShapeError("align_blocks: row mismatch");
    count = std::min<int>({count, static_cast<int>(x.cols()), static_cast<int>(ref.cols()),
                           static_cast<int>(values.size())});
    AlignmentResult out;
    out.blocks = degenerate_blocks(values, count, rel_gap);
    out.aligned = x.leftCols(count);
    for (auto [a, b] : out.blocks) {
        Matrix q = procrustes(x.middleCols(a, b - a), ref.middleCols(a, b - a));
        out.aligned.middleCols(a, b - a) = x.middleCols(a, b - a) * q;
    }
    out.correlations.resize(count);
    for (int r = 0; r < count; ++r)
        out.correlations(r) = pearson(out.aligned.col(r), ref.col(r));
    return out;
}

/// Spearman rank correlation (average ranks on ties).
inline double spearman(const Vector& a, const Vector& b) {
    auto ranks = [](const Vector& v) {
        const Index n = v.size();
        std::vector<Index> idx(static_cast<size_t>(n));
        for (Index i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        std::sort(idx.begin(), idx.end(), [&](Index p, Index q) { return v(p) < v(q); });
        Vector r(n);
        Index i = 0;
        while (i < n) {
            Index j = i;
            while (j + 1 < n && v(idx[static_cast<size_t>(j + 1)]) == v(idx[static_cast<size_t>(i)])) ++j;
            double avg = 0.5 * static_cast<double>(i + j);
            for (Index t = i; t <= j; ++t) r(idx[static_cast<size_t>(t)]) = avg;
            i = j + 1;
        }
        return r;
    };
    return pearson(ranks(a), ranks(b));
}

/// Distance correlation between row sets (O(N^2) time, O(N) memory).
inline double distance_correlation(const Matrix& x, const Matrix& y) {
    const Index n = x.rows();
    if (y.rows() != n) throw ShapeError("distance_correlation: row mismatch");
    Vector arow = Vector::Zero(n), brow = Vector::Zero(n);
    double amean = 0.0, bmean = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            double a = (x.row(i) - x.row(j)).norm();
            double b = (y.row(i) - y.row(j)).norm();
            arow(i) += a;
            brow(i) += b;
        }
    }
    arow /= static_cast<double>(n);
    brow /= static_cast<double>(n);
    amean = arow.mean();
    bmean = brow.mean();
    double vxy = 0.0, vxx = 0.0, vyy = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            double A = (x.row(i) - x.row(j)).norm() - arow(i) - arow(j) + amean;
            double B = (y.row(i) - y.row(j)).norm() - brow(i) - brow(j) + bmean;
            vxy += A * B;
            vxx += A * A;
            vyy += B * B;
        }
    }
    if (vxx <= 0.0 || vyy <= 0.0) return 0.0;
    return std::sqrt(vxy / std::sqrt(vxx * vyy));
}

} // namespace idm
