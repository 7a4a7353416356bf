#pragma once

#include "idm/knn.hpp"
#include "idm/spectral.hpp"

#include <cmath>

namespace idm {

/// Everything needed to evaluate a kernel row at a new point exactly the
/// way the training kernel was built. For tau > 0 the derivative at the
/// new point is borrowed from its nearest training point.
struct KernelRecipe {
    double epsilon = 0.0;
    double tau = 0.0;
    DistanceForm form = DistanceForm::Blend;
    int k = 0;                             // stencil size used in training
    const DerivativeField* derivs = nullptr;  // required when tau > 0
};

struct NystromResult {
    Vector phi_row;                 // extended phi_r(x_new), r = 0..modes-1
    Eigen::RowVectorXd embedding;   // rescaled-map row (when params given)
    double nearest_distance = 0.0;
    bool extrapolation = false;     // x_new beyond the sampled region
};

/// Out-of-sample eigenfunction extension
///   phi_r(x) = (1/xi_r) sum_i p(x, x_i) phi_r(x_i),
/// where p applies the training right/left normalizations to the new
/// kernel row. Extending a training point reproduces its stored row.
inline NystromResult nystrom_extend(const Eigen::RowVectorXd& x_new,
                                    const PointCloud& training,
                                    const NeighborGraph& graph,
                                    const SpectralDecomposition& decomp,
                                    const KernelRecipe& recipe,
                                    const RescaledMapParams* map_params = nullptr) {
    if (x_new.size() != training.dim())
        throw ShapeError("nystrom_extend: query dimension mismatch");
    if (!(recipe.epsilon > 0.0)) throw ParameterError("nystrom_extend: recipe epsilon missing");
    if (recipe.tau > 0.0 && !recipe.derivs)
        throw ParameterError("nystrom_extend: tau > 0 requires a derivative field");
    const int k = recipe.k > 0 ? recipe.k : graph.k();

    auto nbrs = nearest_to(training.points, x_new, k);
    NystromResult out;
    out.nearest_distance = nbrs.front().second;
    double support_radius = graph.distances.col(graph.k() - 1).maxCoeff();
    out.extrapolation = out.nearest_distance > support_radius;

    const Matrix* dh = nullptr;
    if (recipe.tau > 0.0)
        dh = &recipe.derivs->derivs[static_cast<size_t>(nbrs.front().first)];

    // raw kernel row, then right normalization against training D_i
    Vector row(static_cast<Index>(nbrs.size()));
    double d_new = 0.0;
    for (size_t j = 0; j < nbrs.size(); ++j) {
        double d = nbrs[j].second;
        if (recipe.tau > 0.0) {
            double feat = (*dh * (training.points.row(nbrs[j].first) - x_new).transpose()).norm();
            d = (recipe.form == DistanceForm::Blend)
                    ? (1.0 - recipe.tau) * d + recipe.tau * feat
                    : std::sqrt((1.0 - recipe.tau) * d * d + recipe.tau * feat * feat);
        }
        row(static_cast<Index>(j)) = std::exp(-d * d / (2.0 * recipe.epsilon));
        d_new += row(static_cast<Index>(j));
    }
    const int modes = decomp.modes();
    if (!(d_new > 0.0)) {
        // beyond kernel support: the extension degenerates to zero
        out.extrapolation = true;
        out.phi_row = Vector::Zero(modes);
        if (map_params)
            out.embedding = Eigen::RowVectorXd::Zero(std::min(map_params->modes, modes - 1));
        return out;
    }
    for (size_t j = 0; j < nbrs.size(); ++j)
        row(static_cast<Index>(j)) /= d_new * decomp.right_normalizer(nbrs[j].first);
    double markov_sum = row.sum();
    row /= markov_sum;

    out.phi_row = Vector::Zero(modes);
    for (size_t j = 0; j < nbrs.size(); ++j)
        out.phi_row += row(static_cast<Index>(j)) * decomp.phi.row(nbrs[j].first).transpose();
    for (int r = 0; r < modes; ++r) out.phi_row(r) /= decomp.xi(r);

    if (map_params) {
        int M = std::min(map_params->modes, modes - 1);
        double di = map_params->local_dims.size() > 0
                        ? map_params->local_dims(nbrs.front().first)
                        : 1.0;
        double pref = std::pow(2.0 * M_PI, di / 4.0) *
                      std::pow(4.0 * map_params->s, di / 4.0 + 0.5);
        out.embedding.resize(M);
        for (int r = 1; r <= M; ++r)
            out.embedding(r - 1) = pref * std::exp(decomp.lambda(r) * map_params->s) *
                                   out.phi_row(r);
    }
    return out;
}

} // namespace idm
