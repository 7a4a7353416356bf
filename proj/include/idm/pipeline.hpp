#pragma once

#include "idm/derivative.hpp"
#include "idm/kernel.hpp"
#include "idm/knn.hpp"
#include "idm/spectral.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace idm {

struct IdmParams {
    double tau = 0.5;          // geometric-flow discretization, [0, 1); 0 only for diagnostics
    int iterations = 4;        // t
    int k = 500;
    int k2 = 32;
    int bandwidth_grid = 100;  // L
    int modes = 250;           // M
    ScanMode scan_mode = ScanMode::Simple;
    DistanceForm distance_form = DistanceForm::Blend;
    SymmetrizeRule symmetrize = SymmetrizeRule::Average;
    double s_multiplier = 10.0;  // s = multiplier * global epsilon
    // Intermediate passes propagate geometry, so their diffusion time
    // tracks the per-pass bandwidth. The final pass is the readout: its
    // time is floored at the leading relaxation time 1/|lambda_1|, so
    // coordinates beyond the feature modes decay by at least e^{-3}
    // and the embedding reports the feature instead of its
    // own curvature harmonics. The per-pass bandwidth cannot serve as
    // the readout scale: it follows the collapsed neighbor spacing.
    bool readout_floor = true;
    std::uint64_t seed = 7;
    bool cross_validation_stop = false;  // stop once the holdout decoder residual worsens
    double holdout_fraction = 0.2;

    void validate(Index n) const {
        if (!(tau >= 0.0 && tau < 1.0)) throw ParameterError("IdmParams: tau must be in [0, 1)");
        if (iterations < 1) throw ParameterError("IdmParams: iterations must be positive");
        if (k < 2 || k > n) throw ParameterError("IdmParams: k must be in [2, N]");
        if (k2 < 1 || k2 > k) throw ParameterError("IdmParams: k2 must be in [1, k]");
        if (bandwidth_grid < 3) throw ParameterError("IdmParams: bandwidth grid too small");
        if (modes < 1) throw ParameterError("IdmParams: modes must be positive");
        if (!(s_multiplier > 0.0)) throw ParameterError("IdmParams: s multiplier must be positive");
        if (cross_validation_stop && !(holdout_fraction > 0.0 && holdout_fraction < 1.0))
            throw ParameterError("IdmParams: holdout fraction must be in (0, 1)");
    }
};

/// Artifacts recorded for one pass of the map.
struct IdmIteration {
    DerivativeField field;
    double global_epsilon = 0.0;
    double s = 0.0;
    Vector xi;
    Vector lambda;
    int dropped_modes = 0;
    DecompositionCheck check;
    double cv_residual = std::numeric_limits<double>::quiet_NaN();
};

struct IdmTrajectory {
    std::vector<DiffusionEmbedding> embeddings;  // x^(0) .. x^(t)
    std::vector<IdmIteration> iterations;        // one per pass

    const DiffusionEmbedding& final_embedding() const { return embeddings.back(); }
};

namespace detail {

struct PassOutput {
    SpectralDecomposition decomp;
    DiffusionEmbedding embedding;
    IdmIteration info;
};

template <typename Fn>
auto run_stage(int iteration, const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        std::string msg = "iteration " + std::to_string(iteration) + ", stage " + stage + ": " +
                          e.what();
        if (dynamic_cast<const ConnectivityError*>(&e)) throw ConnectivityError(msg);
        if (dynamic_cast<const DegenerateGeometryError*>(&e)) throw DegenerateGeometryError(msg);
        if (dynamic_cast<const SolverError*>(&e)) throw SolverError(msg);
        if (dynamic_cast<const NumericalError*>(&e)) throw NumericalError(msg);
        if (dynamic_cast<const ShapeError*>(&e)) throw ShapeError(msg);
        if (dynamic_cast<const ParameterError*>(&e)) throw ParameterError(msg);
        throw Error(msg);
    }
}

// estimate_field with optional features (geometry-only sweep when null).
inline DerivativeField estimate_field_impl(const PointCloud& cloud, const FeatureSet* features,
                                           const NeighborGraph& graph, const FieldParams& fp) {
    if (features) return estimate_field(cloud, *features, graph, fp);
    const Index n = cloud.size();
    DerivativeField f;
    f.local_dim.resize(n);
    f.density.resize(n);
    f.epsilons.resize(n);
    f.weight_sums.resize(n);
    f.rank_deficient.assign(static_cast<size_t>(n), 0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (Index i = 0; i < n; ++i) {
        BandwidthScan scan = bandwidth_scan(cloud, graph, i, fp.bandwidth_grid, fp.mode);
        LocalChart chart = build_chart(cloud, graph, i, scan.selected_epsilon);
        f.local_dim(i) = scan.selected_dim;
        f.density(i) = density_estimate(chart, scan.selected_dim);
        f.epsilons(i) = scan.selected_epsilon;
        f.weight_sums(i) = chart.weight_sum;
    }
    return f;
}

// The argmax selector reads the dimension off a noisy curve, and the
// rescaled-map prefactor turns pointwise outliers into large per-point
// scale jumps. A median over the neighbor stencil keeps the spatial
// variation (parts of the manifold genuinely contract at different
// rates) while removing selector noise; the density is re-derived so it
// stays consistent with the dimension actually used.
inline void smooth_local_dimension(DerivativeField& field, const NeighborGraph& graph,
                                   Index cloud_size) {
    const Index n = field.size();
    const int window = std::min(graph.k(), 33);
    Vector smoothed(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (Index i = 0; i < n; ++i) {
        std::vector<double> vals(static_cast<size_t>(window));
        for (int j = 0; j < window; ++j)
            vals[static_cast<size_t>(j)] = field.local_dim(graph.indices(i, j));
        std::nth_element(vals.begin(), vals.begin() + window / 2, vals.end());
        smoothed(i) = vals[static_cast<size_t>(window / 2)];
    }
    field.local_dim = smoothed;
    for (Index i = 0; i < n; ++i) {
        double norm = std::pow(2.0 * M_PI * field.epsilons(i), field.local_dim(i) / 2.0);
        field.density(i) = field.weight_sums(i) / (static_cast<double>(cloud_size) * norm);
    }
}

// One diffusion-map pass on the given coordinates. Feature targets stay in
// the original feature space; pass nullptr for a plain isotropic pass.
inline PassOutput run_pass(const PointCloud& coords, const FeatureSet* features,
                           const IdmParams& p, int iteration, bool readout = false) {
    PassOutput out;
    NeighborGraph graph = run_stage(iteration, "knn", [&] { return knn(coords, p.k); });

    FieldParams fp{p.bandwidth_grid, p.scan_mode};
    out.info.field = run_stage(iteration, "derivative_field",
                               [&] { return estimate_field_impl(coords, features, graph, fp); });
    smooth_local_dimension(out.info.field, graph, coords.size());

    AnisotropicDistance dist = run_stage(iteration, "anisotropic_distance", [&] {
        if (p.tau == 0.0) {
            AnisotropicDistance d;
            d.values = graph.distances;
            d.tau = 0.0;
            d.form = p.distance_form;
            return d;
        }
        return anisotropic_distance(coords, graph, out.info.field, p.tau, p.distance_form);
    });

    out.info.global_epsilon =
        run_stage(iteration, "global_bandwidth", [&] { return global_bandwidth(dist, p.k2); });

    SparseKernel kern = run_stage(iteration, "assemble_kernel", [&] {
        return assemble_kernel(dist, out.info.global_epsilon, graph, p.symmetrize);
    });

    NormalizedKernel norm =
        run_stage(iteration, "normalize_kernel", [&] { return normalize_kernel(kern); });

    out.decomp = run_stage(iteration, "eigensolve", [&] {
        EigensolveOptions eo;
        eo.seed = p.seed + static_cast<std::uint64_t>(iteration) * 0x9e3779b9ULL;
        return eigensolve(norm, p.modes + 1, eo);
    });

    run_stage(iteration, "density_normalize", [&] {
        density_normalize(out.decomp, out.info.field.density);
        return 0;
    });

    out.info.s = p.s_multiplier * out.info.global_epsilon;
    if (readout && out.decomp.modes() > 1 && out.decomp.lambda(1) < 0.0)
        out.info.s = std::max(out.info.s, 1.0 / std::abs(out.decomp.lambda(1)));
    out.embedding = run_stage(iteration, "rescaled_map", [&] {
        RescaledMapParams mp{out.info.s, p.modes, out.info.field.local_dim};
        return rescaled_map(out.decomp, mp, iteration);
    });

    out.info.xi = out.decomp.xi;
    out.info.lambda = out.decomp.lambda;
    out.info.dropped_modes = out.decomp.dropped_modes;
    out.info.check = check_invariants(out.decomp);
    if (out.info.check.xi0_error > 1e-6)
        throw NumericalError("iteration " + std::to_string(iteration) +
                             ": top eigenvalue deviates from 1 by " +
                             std::to_string(out.info.check.xi0_error));
    // a second unit eigenvalue means the kernel graph is disconnected
    if (out.decomp.modes() > 1 && out.decomp.xi(1) > 1.0 - 1e-12)
        throw ConnectivityError("iteration " + std::to_string(iteration) +
                                ": kernel has a repeated unit eigenvalue (disconnected data)");
    return out;
}

} // namespace detail

/// One isotropic (tau = 0) rescaled diffusion map of a bare cloud; the
/// spectral problem the IDM degenerates to, and the embedding used for
/// the feature side of the decoder.
struct DiffusionMapResult {
    SpectralDecomposition decomposition;
    DiffusionEmbedding embedding;
    IdmIteration info;
};

inline DiffusionMapResult run_diffusion_map(const PointCloud& cloud, IdmParams params) {
    params.tau = 0.0;
    params.validate(cloud.size());
    detail::PassOutput out = detail::run_pass(cloud, nullptr, params, 1);
    return DiffusionMapResult{std::move(out.decomp), std::move(out.embedding),
                              std::move(out.info)};
}

/// Linear readout from IDM coordinates to the feature manifold's rescaled
/// diffusion coordinates.
struct LinearFeatureDecoder {
    Matrix map;              // M_feat x M_idm
    double residual = 0.0;   // relative Frobenius
    bool rank_deficient = false;
};

inline LinearFeatureDecoder fit_linear_decoder(const Matrix& idm_coords,
                                               const Matrix& feature_coords) {
    if (idm_coords.rows() != feature_coords.rows())
        throw ShapeError("fit_linear_decoder: row mismatch");
    // normal equations with an eigenvalue-truncated pseudo-inverse; the
    // final IDM coordinates are effectively low rank by design
    Matrix gram = idm_coords.transpose() * idm_coords;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    if (eig.info() != Eigen::Success)
        throw SolverError("fit_linear_decoder: eigendecomposition failed");
    const Vector& lam = eig.eigenvalues();  // ascending
    double cutoff = lam(lam.size() - 1) * 1e-16;
    Index rank = 0;
    Vector inv = Vector::Zero(lam.size());
    for (Index i = 0; i < lam.size(); ++i) {
        if (lam(i) > cutoff && lam(i) > 0.0) {
            inv(i) = 1.0 / lam(i);
            ++rank;
        }
    }
    Matrix ht = eig.eigenvectors() *
                (inv.asDiagonal() *
                 (eig.eigenvectors().transpose() * (idm_coords.transpose() * feature_coords)));
    LinearFeatureDecoder dec;
    dec.map = ht.transpose();
    dec.rank_deficient = rank < lam.size();
    double fn = feature_coords.norm();
    dec.residual = fn > 0.0 ? (idm_coords * ht - feature_coords).norm() / fn : 0.0;
    return dec;
}

inline LinearFeatureDecoder fit_decoder(const IdmTrajectory& traj,
                                        const DiffusionEmbedding& feature_embedding) {
    return fit_linear_decoder(traj.final_embedding().coords, feature_embedding.coords);
}

namespace detail {

inline std::vector<Index> holdout_rows(Index n, double fraction, std::uint64_t seed) {
    std::vector<Index> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(seed);
    for (Index i = n - 1; i > 0; --i) {
        Index j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    Index cut = std::max<Index>(1, static_cast<Index>(std::floor(fraction * n)));
    return {idx.begin(), idx.begin() + cut};
}

inline double holdout_residual(const Matrix& x, const Matrix& f, const std::vector<Index>& hold) {
    std::vector<char> is_hold(static_cast<size_t>(x.rows()), 0);
    for (Index i : hold) is_hold[static_cast<size_t>(i)] = 1;
    Index ntr = x.rows() - static_cast<Index>(hold.size());
    Matrix xtr(ntr, x.cols()), ftr(ntr, f.cols());
    Matrix xho(static_cast<Index>(hold.size()), x.cols()), fho(static_cast<Index>(hold.size()), f.cols());
    Index a = 0, b = 0;
    for (Index i = 0; i < x.rows(); ++i) {
        if (is_hold[static_cast<size_t>(i)]) {
            xho.row(b) = x.row(i);
            fho.row(b) = f.row(i);
            ++b;
        } else {
            xtr.row(a) = x.row(i);
            ftr.row(a) = f.row(i);
            ++a;
        }
    }
    LinearFeatureDecoder dec = fit_linear_decoder(xtr, ftr);
    double fn = fho.norm();
    return fn > 0.0 ? (xho * dec.map.transpose() - fho).norm() / fn : 0.0;
}

} // namespace detail

/// The iterated diffusion map. Each pass re-estimates the feature
/// derivative on the current coordinates (targets stay the original
/// feature values), biases the kernel by tau, and re-embeds through the
/// rescaled diffusion map. With cross_validation_stop set, iteration ends
/// early once the holdout decoder residual against `feature_embedding`
/// stops improving.
inline IdmTrajectory idm_run(const PointCloud& cloud, const FeatureSet& features,
                             const IdmParams& params,
                             const DiffusionEmbedding* feature_embedding = nullptr) {
    params.validate(cloud.size());
    if (features.size() != cloud.size())
        throw ShapeError("idm_run: feature rows do not match cloud");
    if (params.cross_validation_stop && !feature_embedding)
        throw ParameterError("idm_run: cross-validation stop requires a feature embedding");

    IdmTrajectory traj;
    DiffusionEmbedding initial;
    initial.coords = cloud.points;
    initial.iteration = 0;
    initial.s = 0.0;
    traj.embeddings.push_back(std::move(initial));

    std::vector<Index> hold;
    if (params.cross_validation_stop)
        hold = detail::holdout_rows(cloud.size(), params.holdout_fraction, params.seed);
    double prev_cv = std::numeric_limits<double>::infinity();

    for (int it = 1; it <= params.iterations; ++it) {
        PointCloud current{traj.embeddings.back().coords};
        bool is_readout = params.readout_floor && it == params.iterations && it > 1;
        detail::PassOutput out = detail::run_pass(current, &features, params, it, is_readout);
        out.embedding.iteration = it;

        if (params.cross_validation_stop) {
            out.info.cv_residual =
                detail::holdout_residual(out.embedding.coords, feature_embedding->coords, hold);
        }

        traj.embeddings.push_back(std::move(out.embedding));
        traj.iterations.push_back(std::move(out.info));

        if (params.cross_validation_stop) {
            double cv = traj.iterations.back().cv_residual;
            if (cv >= prev_cv) break;
            prev_cv = cv;
        }
    }
    return traj;
}

/// Neighbors of one base point in every recorded embedding, reported as
/// original-cloud indices (the base point itself comes first).
inline std::vector<std::vector<int>> neighbor_evolution(const IdmTrajectory& traj,
                                                        Index base_index, int count) {
    if (traj.embeddings.empty()) throw ParameterError("neighbor_evolution: empty trajectory");
    std::vector<std::vector<int>> out;
    out.reserve(traj.embeddings.size());
    for (const auto& emb : traj.embeddings) {
        auto nbrs = nearest_to(emb.coords, emb.coords.row(base_index), count);
        std::vector<int> ids;
        ids.reserve(nbrs.size());
        for (auto& [j, d] : nbrs) ids.push_back(j);
        out.push_back(std::move(ids));
    }
    return out;
}

/// Fixed-point certificate: with the data equal to an isometric embedding
/// of the feature values, the tangent-projected derivative should be the
/// identity. Returns max_i || T_i DH(i) T_i^T - I ||_2.
inline double fixed_point_residual(const PointCloud& cloud, const FeatureSet& features,
                                   int k = 0, int bandwidth_grid = 100,
                                   ScanMode mode = ScanMode::Simple) {
    if (features.dim() != cloud.dim())
        throw ParameterError("fixed_point_residual: feature and data dimensions must match");
    if (k <= 0) k = std::min<Index>(cloud.size(), 500);
    NeighborGraph graph = knn(cloud, k);
    FieldParams fp{bandwidth_grid, mode};
    double worst = 0.0;
    const Index n = cloud.size();
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) reduction(max : worst)
#endif
    for (Index i = 0; i < n; ++i) {
        BandwidthScan scan = bandwidth_scan(cloud, graph, i, fp.bandwidth_grid, fp.mode);
        LocalChart chart = build_chart(cloud, graph, i, scan.selected_epsilon, &features);
        RegressionResult reg = estimate_derivative(chart);
        int d = std::max(1, static_cast<int>(std::lround(scan.selected_dim)));
        d = std::min<int>(d, static_cast<int>(std::min<Index>(cloud.dim(), k)));
        TangentFrame frame = tangent_frame(chart, d);
        Matrix b = frame.basis * reg.derivative * frame.basis.transpose();
        Matrix dev = b - Matrix::Identity(d, d);
        double r = dev.jacobiSvd().singularValues()(0);
        worst = std::max(worst, r);
    }
    return worst;
}

} // namespace idm
