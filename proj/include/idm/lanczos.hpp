#pragma once

#include "idm/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace idm {

struct LanczosOptions {
    int nev = 1;               // number of largest (algebraic) eigenpairs
    int ncv = 0;               // Krylov basis size, 0 = automatic
    double tol = 1e-10;        // residual tolerance ||Av - xv|| <= tol * max(1, |x|)
    int max_restarts = 100;
    std::uint64_t seed = 7;    // start vector seed
};

struct LanczosResult {
    Vector values;     // descending
    Matrix vectors;    // n x nev, orthonormal columns
    Vector residuals;  // explicit ||Av - xv|| per returned pair
    int restarts = 0;
    bool dense_path = false;
};

namespace detail {

inline Vector deterministic_start(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Vector v(n);
    for (Index i = 0; i < n; ++i)
        v(i) = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0) - 0.5;
    double nv = v.norm();
    if (nv == 0.0) { v(0) = 1.0; nv = 1.0; }
    return v / nv;
}

inline LanczosResult dense_topk(const SparseMatrix& A, int nev) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig{Matrix(A)};
    if (eig.info() != Eigen::Success)
        throw SolverError("dense eigensolve failed");
    const Index n = A.rows();
    LanczosResult r;
    r.dense_path = true;
    r.values.resize(nev);
    r.vectors.resize(n, nev);
    r.residuals = Vector::Zero(nev);
    for (int i = 0; i < nev; ++i) {
        r.values(i) = eig.eigenvalues()(n - 1 - i);
        r.vectors.col(i) = eig.eigenvectors().col(n - 1 - i);
        r.residuals(i) = (A * r.vectors.col(i) - r.values(i) * r.vectors.col(i)).norm();
    }
    return r;
}

} // namespace detail

/// Largest-algebraic eigenpairs of a sparse symmetric matrix by
/// thick-restart Lanczos with full reorthogonalization. Deterministic for
/// a fixed seed; falls back to a dense solve only when the requested
/// count leaves no room for a Krylov basis.
inline LanczosResult lanczos_symmetric(const SparseMatrix& A, LanczosOptions opt) {
    const Index n = A.rows();
    if (A.cols() != n) throw ParameterError("lanczos_symmetric: matrix must be square");
    int nev = opt.nev;
    if (nev < 1) throw ParameterError("lanczos_symmetric: nev must be positive");
    if (nev > n) throw ParameterError("lanczos_symmetric: nev exceeds matrix size");

    if (nev + 40 >= n) return detail::dense_topk(A, nev);

    int ncv = opt.ncv > 0 ? opt.ncv : std::max(2 * nev + 16, nev + 64);
    ncv = std::min<int>(static_cast<int>(n) - 1, ncv);

    Matrix V(n, ncv + 1);
    Matrix T = Matrix::Zero(ncv, ncv);
    V.col(0) = detail::deterministic_start(n, opt.seed);

    int k0 = 0;  // columns locked by the previous restart
    std::mt19937_64 refill(opt.seed ^ 0x9e3779b97f4a7c15ULL);

    Eigen::SelfAdjointEigenSolver<Matrix> small;
    LanczosResult result;

    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        double beta = 0.0;
        for (int j = k0; j < ncv; ++j) {
            Vector w = A * V.col(j);
            // T column = exact projection; two Gram-Schmidt passes keep
            // the basis orthogonal to machine precision.
            Vector coeff = V.leftCols(j + 1).transpose() * w;
            w.noalias() -= V.leftCols(j + 1) * coeff;
            Vector corr = V.leftCols(j + 1).transpose() * w;
            w.noalias() -= V.leftCols(j + 1) * corr;
            coeff += corr;
            T.col(j).head(j + 1) = coeff;
            T.row(j).head(j + 1) = coeff.transpose();
            beta = w.norm();
            if (beta < 1e-14) {
                // invariant subspace found; continue with a fresh direction
                Vector f(n);
                for (Index r = 0; r < n; ++r)
                    f(r) = static_cast<double>(refill() >> 11) * (1.0 / 9007199254740992.0) - 0.5;
                f -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * f).eval();
                f -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * f).eval();
                double fn = f.norm();
                if (fn < 1e-14) { ncv = j + 1; break; }
                V.col(j + 1) = f / fn;
                beta = 0.0;
            } else {
                V.col(j + 1) = w / beta;
            }
        }

        Matrix Tsym = 0.5 * (T.topLeftCorner(ncv, ncv) + T.topLeftCorner(ncv, ncv).transpose());
        small.compute(Tsym);
        if (small.info() != Eigen::Success)
            throw SolverError("lanczos_symmetric: projected eigensolve failed");

        // descending Ritz order
        std::vector<int> order(static_cast<size_t>(ncv));
        for (int i = 0; i < ncv; ++i) order[static_cast<size_t>(i)] = ncv - 1 - i;

        Vector bounds(ncv);
        for (int i = 0; i < ncv; ++i) {
            int c = order[static_cast<size_t>(i)];
            bounds(i) = std::abs(beta * small.eigenvectors()(ncv - 1, c));
        }

        bool converged = true;
        for (int i = 0; i < nev; ++i) {
            double theta = small.eigenvalues()(order[static_cast<size_t>(i)]);
            if (bounds(i) > opt.tol * std::max(1.0, std::abs(theta))) { converged = false; break; }
        }

        if (converged || restart == opt.max_restarts) {
            Matrix S(ncv, nev);
            result.values.resize(nev);
            for (int i = 0; i < nev; ++i) {
                int c = order[static_cast<size_t>(i)];
                result.values(i) = small.eigenvalues()(c);
                S.col(i) = small.eigenvectors().col(c);
            }
            result.vectors.noalias() = V.leftCols(ncv) * S;
            result.residuals.resize(nev);
            for (int i = 0; i < nev; ++i)
                result.residuals(i) =
                    (A * result.vectors.col(i) - result.values(i) * result.vectors.col(i)).norm();
            result.restarts = restart;
            bool verified = true;
            for (int i = 0; i < nev; ++i)
                if (result.residuals(i) > 1e-8 * std::max(1.0, std::abs(result.values(i))))
                    verified = false;
            if (!converged || !verified) {
                double worst = result.residuals.maxCoeff();
                throw SolverError("lanczos_symmetric: no convergence after " +
                                  std::to_string(restart) + " restarts, worst residual " +
                                  std::to_string(worst));
            }
            return result;
        }

        // thick restart: lock the leading Ritz vectors, keep the residual
        // direction as the next Lanczos vector
        int keep = std::min(nev + (ncv - nev) / 2, ncv - 2);
        Matrix S(ncv, keep);
        Vector theta(keep);
        for (int i = 0; i < keep; ++i) {
            int c = order[static_cast<size_t>(i)];
            theta(i) = small.eigenvalues()(c);
            S.col(i) = small.eigenvectors().col(c);
        }
        Matrix Vk = V.leftCols(ncv) * S;
        V.leftCols(keep) = Vk;
        V.col(keep) = V.col(ncv);
        T.setZero();
        for (int i = 0; i < keep; ++i) T(i, i) = theta(i);
        k0 = keep;
    }
    throw SolverError("lanczos_symmetric: unreachable");
}

} // namespace idm
