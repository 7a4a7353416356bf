#pragma once

#include "idm/kernel.hpp"
#include "idm/lanczos.hpp"

#include <cmath>
#include <string>

namespace idm {

/// Kernel after the two diffusion-map normalizations. The symmetric
/// matrix is spectrally equivalent to the Markov operator; its top
/// eigenvalue is 1 with eigenvector proportional to the left normalizer.
struct NormalizedKernel {
    SparseMatrix matrix;       // K-hat, symmetric
    Vector left_normalizer;    // D-hat
    Vector right_normalizer;   // D (row sums of the symmetrized kernel)
    double epsilon = 0.0;
    double tau = 0.0;
};

inline NormalizedKernel normalize_kernel(const SparseKernel& kern) {
    const Index n = kern.entries.rows();
    NormalizedKernel out;
    out.epsilon = kern.epsilon;
    out.tau = kern.tau;

    Vector D = Vector::Zero(n);
    for (Index c = 0; c < n; ++c)
        for (SparseMatrix::InnerIterator it(kern.entries, c); it; ++it)
            D(it.row()) += it.value();
    for (Index i = 0; i < n; ++i)
        if (!(D(i) > 0.0))
            throw ConnectivityError("normalize_kernel: point " + std::to_string(i) +
                                    " has an empty kernel row");
    out.right_normalizer = D;

    // right normalization K = J / (D_i D_j)
    SparseMatrix K = kern.entries;
    for (Index c = 0; c < n; ++c)
        for (SparseMatrix::InnerIterator it(K, c); it; ++it)
            it.valueRef() /= D(it.row()) * D(c);

    Vector rowsum = Vector::Zero(n);
    for (Index c = 0; c < n; ++c)
        for (SparseMatrix::InnerIterator it(K, c); it; ++it)
            rowsum(it.row()) += it.value();
    out.left_normalizer = rowsum.array().sqrt();

    for (Index c = 0; c < n; ++c)
        for (SparseMatrix::InnerIterator it(K, c); it; ++it)
            it.valueRef() /= out.left_normalizer(it.row()) * out.left_normalizer(c);
    out.matrix = std::move(K);
    return out;
}

/// Eigenfunctions and diffusion rates of one normalized kernel.
/// lambda_r = 2 log(xi_r) / eps: one application of exp(-d^2/(2 eps))
/// is heat time eps/2, so this scaling recovers Laplace-Beltrami
/// eigenvalues (the unit circle yields lambda_r near -ceil(r/2)^2).
struct SpectralDecomposition {
    Vector xi;                 // descending, xi(0) ~ 1
    Vector lambda;             // 2 log(xi_r) / eps
    Matrix phi;                // N x (modes), column r is phi_r
    Vector q;                  // density used for normalization
    double epsilon = 0.0;
    Vector left_normalizer;
    Vector right_normalizer;
    int dropped_modes = 0;     // nonpositive xi trimmed from the tail
    bool density_normalized = false;

    Index size() const { return phi.rows(); }
    int modes() const { return static_cast<int>(xi.size()); }
};

struct EigensolveOptions {
    double tol = 1e-10;
    std::uint64_t seed = 7;
    int ncv = 0;
};

inline SpectralDecomposition eigensolve(const NormalizedKernel& kern, int num_modes,
                                        const EigensolveOptions& opt = {}) {
    const Index n = kern.matrix.rows();
    if (num_modes < 1) throw ParameterError("eigensolve: need at least one mode");
    num_modes = std::min<int>(num_modes, static_cast<int>(n));

    LanczosOptions lopt;
    lopt.nev = num_modes;
    lopt.tol = opt.tol;
    lopt.seed = opt.seed;
    lopt.ncv = opt.ncv;
    LanczosResult eig = lanczos_symmetric(kern.matrix, lopt);

    int keep = num_modes;
    while (keep > 0 && !(eig.values(keep - 1) > 0.0)) --keep;
    if (keep == 0) throw SolverError("eigensolve: no positive eigenvalues");

    SpectralDecomposition d;
    d.epsilon = kern.epsilon;
    d.left_normalizer = kern.left_normalizer;
    d.right_normalizer = kern.right_normalizer;
    d.dropped_modes = num_modes - keep;
    d.xi = eig.values.head(keep);
    d.lambda.resize(keep);
    for (int r = 0; r < keep; ++r) d.lambda(r) = 2.0 * std::log(d.xi(r)) / d.epsilon;

    d.phi.resize(n, keep);
    for (int r = 0; r < keep; ++r) {
        Vector col = eig.vectors.col(r).cwiseQuotient(d.left_normalizer);
        // deterministic sign: the first entry of largest magnitude is positive
        Index arg = 0;
        double best = -1.0;
        for (Index i = 0; i < n; ++i) {
            double a = std::abs(col(i));
            if (a > best) { best = a; arg = i; }
        }
        if (col(arg) < 0.0) col = -col;
        d.phi.col(r) = col;
    }
    return d;
}

/// Rescales each eigenfunction so that (1/N) sum_i phi_r(x_i)^2 / q(i) = 1,
/// the Monte-Carlo approximation of unit L2 norm on the manifold.
inline void density_normalize(SpectralDecomposition& d, const Vector& q) {
    const Index n = d.size();
    if (q.size() != n) throw ShapeError("density_normalize: q size mismatch");
    if ((q.array() <= 0.0).any()) throw ParameterError("density_normalize: q must be positive");
    for (int r = 0; r < d.modes(); ++r) {
        double nrm = (d.phi.col(r).array().square() / q.array()).sum() / static_cast<double>(n);
        d.phi.col(r) /= std::sqrt(nrm);
    }
    d.q = q;
    d.density_normalized = true;
}

struct RescaledMapParams {
    double s = 0.0;        // diffusion time
    int modes = 250;       // M, embedding dimension (trivial mode excluded)
    Vector local_dims;     // per-point d(i)
};

/// x_i -> (2 pi)^{d(i)/4} (4 s)^{d(i)/4 + 1/2} (e^{lambda_1 s} phi_1(x_i), ...).
/// Small embedded distances then approximate geodesic distances.
inline DiffusionEmbedding rescaled_map(const SpectralDecomposition& d,
                                       const RescaledMapParams& params, int iteration = 1) {
    if (!d.density_normalized)
        throw ParameterError("rescaled_map: decomposition must be density-normalized");
    if (!(params.s > 0.0)) throw ParameterError("rescaled_map: s must be positive");
    const Index n = d.size();
    if (params.local_dims.size() != n)
        throw ShapeError("rescaled_map: local_dims size mismatch");
    int M = std::min(params.modes, d.modes() - 1);
    if (M < 1) throw ParameterError("rescaled_map: no nontrivial modes available");

    DiffusionEmbedding e;
    e.iteration = iteration;
    e.s = params.s;
    e.local_dims = params.local_dims;
    e.coords.resize(n, M);
    Vector weight(M);
    for (int r = 1; r <= M; ++r) weight(r - 1) = std::exp(d.lambda(r) * params.s);
    for (Index i = 0; i < n; ++i) {
        double di = params.local_dims(i);
        double pref = std::pow(2.0 * M_PI, di / 4.0) * std::pow(4.0 * params.s, di / 4.0 + 0.5);
        for (int r = 1; r <= M; ++r)
            e.coords(i, r - 1) = pref * weight(r - 1) * d.phi(i, r);
    }
    return e;
}

/// Quantities behind the SpectralDecomposition invariants; callers assert
/// the tolerances appropriate to their fixtures.
struct DecompositionCheck {
    double xi0_error = 0.0;        // |xi_0 - 1|
    double lambda0 = 0.0;
    double phi0_cv = 0.0;          // coefficient of variation of phi_0
    double max_norm_error = 0.0;   // max_r |(1/N) sum phi_r^2 / q - 1|
};

inline DecompositionCheck check_invariants(const SpectralDecomposition& d) {
    DecompositionCheck c;
    c.xi0_error = std::abs(d.xi(0) - 1.0);
    c.lambda0 = d.lambda(0);
    double mean = d.phi.col(0).mean();
    double var = (d.phi.col(0).array() - mean).square().mean();
    c.phi0_cv = std::sqrt(var) / std::abs(mean);
    if (d.density_normalized) {
        for (int r = 0; r < d.modes(); ++r) {
            double nrm = (d.phi.col(r).array().square() / d.q.array()).sum() /
                         static_cast<double>(d.size());
            c.max_norm_error = std::max(c.max_norm_error, std::abs(nrm - 1.0));
        }
    }
    return c;
}

} // namespace idm
