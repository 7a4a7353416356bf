// idm: manifold feature-identification experiments from the command line.
//
// Subcommands: generate, tune, derivative, diffusion-map, idm, eval,
// nystrom. Every run is fully determined by its flags (or --config JSON)
// and seed; outputs are plot-ready CSV/JSON dropped into --out.

#include "idm/idm.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace idm;

namespace {

struct CommonOpts {
    std::string out = "idm_out";
    std::uint64_t seed = 7;
    int threads = 0;
    int k = 500;
    int k2 = 32;
    int modes = 250;
    int grid = 100;  // bandwidth grid L
    double tau = 0.5;
    int iters = 4;
    std::string mode = "simple";
    std::string config;

    ScanMode scan_mode() const {
        if (mode == "simple") return ScanMode::Simple;
        if (mode == "robust") return ScanMode::Robust;
        throw ParameterError("mode must be 'simple' or 'robust'");
    }
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--config", c.config, "JSON config file; flags override its entries");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--seed", c.seed, "random seed");
    cmd->add_option("--threads", c.threads, "worker cap (0 = hardware)");
    cmd->add_option("--k", c.k, "nearest-neighbor count");
    cmd->add_option("--k2", c.k2, "neighbor count for the global bandwidth");
    cmd->add_option("--modes", c.modes, "number of diffusion coordinates M");
    cmd->add_option("--grid", c.grid, "bandwidth grid size L");
    cmd->add_option("--tau", c.tau, "anisotropy blend in [0,1)");
    cmd->add_option("--iters", c.iters, "IDM iteration count");
    cmd->add_option("--mode", c.mode, "bandwidth mode: simple|robust")
        ->check(CLI::IsMember({"simple", "robust"}));
}

void apply_config(const CLI::App* cmd, CommonOpts& c) {
    if (c.config.empty()) return;
    json j = load_json(c.config);
    auto set_if_default = [&](const char* flag, auto& field) {
        if (j.contains(flag) && cmd->count(std::string("--") + flag) == 0)
            field = j.at(flag).template get<std::decay_t<decltype(field)>>();
    };
    set_if_default("out", c.out);
    set_if_default("seed", c.seed);
    set_if_default("threads", c.threads);
    set_if_default("k", c.k);
    set_if_default("k2", c.k2);
    set_if_default("modes", c.modes);
    set_if_default("grid", c.grid);
    set_if_default("tau", c.tau);
    set_if_default("iters", c.iters);
    set_if_default("mode", c.mode);
}

void setup_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

void write_csv_header_rows(const std::string& path, const std::string& header,
                           const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << header << '\n';
    for (const auto& r : rows) {
        for (size_t i = 0; i < r.size(); ++i) {
            if (i) out << ',';
            out << detail::format_double(r[i]);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

IdmParams to_params(const CommonOpts& c) {
    IdmParams p;
    p.tau = c.tau;
    p.iterations = c.iters;
    p.k = c.k;
    p.k2 = c.k2;
    p.bandwidth_grid = c.grid;
    p.modes = c.modes;
    p.scan_mode = c.scan_mode();
    p.seed = c.seed;
    return p;
}

json params_json(const IdmParams& p) {
    return json{{"tau", p.tau},
                {"iterations", p.iterations},
                {"k", p.k},
                {"k2", p.k2},
                {"grid", p.bandwidth_grid},
                {"modes", p.modes},
                {"mode", p.scan_mode == ScanMode::Simple ? "simple" : "robust"},
                {"seed", p.seed}};
}

// ---------------------------------------------------------------- generate

int cmd_generate(const CommonOpts& c, const std::string& fixture, Index n, Index grid_size,
                 double noise) {
    ensure_dir(c.out);
    Fixture f;
    if (fixture == "circle") f = circle(n);
    else if (fixture == "annulus") f = annulus(n, c.seed);
    else if (fixture == "torus") f = torus(grid_size);
    else if (fixture == "torus30") f = torus30(grid_size, c.seed);
    else if (fixture == "sphere") f = sphere(n, c.seed);
    else throw ParameterError("unknown fixture: " + fixture +
                              " (expected circle|annulus|torus|torus30|sphere)");

    PointCloud cloud = f.cloud;
    if (noise > 0.0) cloud = add_noise(cloud, noise, c.seed + 1);
    save_matrix(cloud.points, (fs::path(c.out) / "cloud.csv").string(), FileFormat::Csv);
    save_matrix(f.params, (fs::path(c.out) / "params.csv").string(), FileFormat::Csv);

    json manifest;
    manifest["fixture"] = f.name;
    manifest["seed"] = c.seed;
    manifest["noise_covariance"] = noise;
    for (auto& [key, val] : f.config) manifest["config"][key] = val;
    json feats = json::array();
    for (auto& [name, feat] : f.features) {
        std::string fn = "features_" + name + ".csv";
        save_matrix(feat.values, (fs::path(c.out) / fn).string(), FileFormat::Csv);
        feats.push_back({{"name", name}, {"file", fn}, {"dim", feat.dim()}});
    }
    if (f.cloud.dim() == 3) {
        FeatureSet xyy = scalar_feature_xyy_z(f.cloud);
        save_matrix(xyy.values, (fs::path(c.out) / "features_xyy_z.csv").string(),
                    FileFormat::Csv);
        feats.push_back({{"name", "xyy_z"}, {"file", "features_xyy_z.csv"}, {"dim", 1}});
    }
    manifest["features"] = feats;
    write_json(manifest, (fs::path(c.out) / "manifest.json").string());
    std::cout << "wrote " << f.cloud.size() << " points to " << c.out << "\n";
    return 0;
}

// -------------------------------------------------------------------- tune

void dump_scan(const BandwidthScan& scan, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    Index nsv = scan.singular_values.cols();
    out << "eps,D,d1";
    for (Index j = 0; j < nsv; ++j) out << ",sigma" << (j + 1);
    for (Index j = 0; j < nsv; ++j) out << ",alpha" << (j + 1);
    out << ",d2,d_ave,metric\n";
    const Index L = scan.eps_grid.size();
    auto field = [&](const Vector& v, Index l) {
        return l < v.size() ? v(l) : std::numeric_limits<double>::quiet_NaN();
    };
    for (Index l = 0; l < L; ++l) {
        out << detail::format_double(scan.eps_grid(l)) << ','
            << detail::format_double(scan.weight_sums(l)) << ','
            << detail::format_double(field(scan.d1, l));
        for (Index j = 0; j < nsv; ++j)
            out << ',' << detail::format_double(scan.singular_values(l, j));
        for (Index j = 0; j < nsv; ++j)
            out << ','
                << detail::format_double(l < scan.alpha.rows()
                                             ? scan.alpha(l, j)
                                             : std::numeric_limits<double>::quiet_NaN());
        out << ',' << detail::format_double(field(scan.d2, l)) << ','
            << detail::format_double(field(scan.d_ave, l)) << ','
            << detail::format_double(field(scan.metric, l)) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

int cmd_tune(const CommonOpts& c, const std::string& data, std::vector<Index> points,
             bool all_points) {
    ensure_dir(c.out);
    PointCloud cloud = load_point_cloud(data);
    int k = static_cast<int>(std::min<Index>(c.k, cloud.size()));
    NeighborGraph graph = knn(cloud, k);

    if (all_points) {
        std::vector<std::vector<double>> rows;
        for (Index i = 0; i < cloud.size(); ++i) {
            BandwidthScan s = bandwidth_scan(cloud, graph, i, c.grid, c.scan_mode());
            rows.push_back({static_cast<double>(i), s.selected_epsilon, s.selected_dim});
        }
        write_csv_header_rows((fs::path(c.out) / "tune_summary.csv").string(),
                              "i,eps,dimension", rows);
    }
    if (points.empty() && !all_points) points.push_back(0);
    json selections = json::array();
    for (Index i : points) {
        if (i < 0 || i >= cloud.size())
            throw ParameterError("tune: point index out of range: " + std::to_string(i));
        // both selection rules side by side; the robust scan carries the
        // full singular-value table
        BandwidthScan simple = bandwidth_scan(cloud, graph, i, c.grid, ScanMode::Simple);
        BandwidthScan robust = bandwidth_scan(cloud, graph, i, c.grid, ScanMode::Robust);
        dump_scan(robust, (fs::path(c.out) / ("scan_" + std::to_string(i) + ".csv")).string());
        selections.push_back({{"point", i},
                              {"simple", {{"eps", simple.selected_epsilon},
                                          {"dimension", simple.selected_dim}}},
                              {"robust", {{"eps", robust.selected_epsilon},
                                          {"dimension", robust.selected_dim}}}});
    }
    json manifest;
    manifest["command"] = "tune";
    manifest["data"] = data;
    manifest["k"] = k;
    manifest["grid"] = c.grid;
    manifest["mode"] = c.mode;
    manifest["selections"] = selections;
    write_json(manifest, (fs::path(c.out) / "selections.json").string());
    std::cout << "scanned " << (all_points ? cloud.size() : static_cast<Index>(points.size()))
              << " points\n";
    return 0;
}

// -------------------------------------------------------------- derivative

int cmd_derivative(const CommonOpts& c, const std::string& data, const std::string& features) {
    ensure_dir(c.out);
    PointCloud cloud = load_point_cloud(data);
    FeatureSet feat = load_features(features);
    if (feat.size() != cloud.size())
        throw ShapeError("derivative: feature rows do not match cloud");
    int k = static_cast<int>(std::min<Index>(c.k, cloud.size()));
    NeighborGraph graph = knn(cloud, k);
    DerivativeField field =
        estimate_field(cloud, feat, graph, FieldParams{c.grid, c.scan_mode()});

    std::vector<std::vector<double>> summary;
    Matrix derivs(cloud.size(), feat.dim() * cloud.dim());
    for (Index i = 0; i < cloud.size(); ++i) {
        summary.push_back({static_cast<double>(i), field.epsilons(i), field.local_dim(i),
                           field.density(i),
                           static_cast<double>(field.rank_deficient[static_cast<size_t>(i)])});
        const Matrix& d = field.derivs[static_cast<size_t>(i)];
        for (Index r = 0; r < d.rows(); ++r)
            for (Index m = 0; m < d.cols(); ++m) derivs(i, r * d.cols() + m) = d(r, m);
    }
    write_csv_header_rows((fs::path(c.out) / "field_summary.csv").string(),
                          "i,eps,dimension,density,rank_deficient", summary);
    save_matrix(derivs, (fs::path(c.out) / "derivatives.csv").string(), FileFormat::Csv);
    json manifest;
    manifest["command"] = "derivative";
    manifest["data"] = data;
    manifest["features"] = features;
    manifest["k"] = k;
    manifest["grid"] = c.grid;
    manifest["mode"] = c.mode;
    manifest["derivative_shape"] = {feat.dim(), cloud.dim()};
    write_json(manifest, (fs::path(c.out) / "manifest.json").string());
    std::cout << "estimated derivatives at " << cloud.size() << " points\n";
    return 0;
}

// ----------------------------------------------------------- diffusion-map

void dump_spectrum(const Vector& xi, const Vector& lambda, const std::string& path) {
    std::vector<std::vector<double>> rows;
    for (Index r = 0; r < xi.size(); ++r)
        rows.push_back({static_cast<double>(r), xi(r), lambda(r)});
    write_csv_header_rows(path, "r,xi,lambda", rows);
}

json check_json(const DecompositionCheck& c) {
    return json{{"xi0_error", c.xi0_error},
                {"lambda0", c.lambda0},
                {"phi0_cv", c.phi0_cv},
                {"max_norm_error", c.max_norm_error}};
}

int cmd_diffusion_map(const CommonOpts& c, const std::string& data) {
    ensure_dir(c.out);
    PointCloud cloud = load_point_cloud(data);
    IdmParams p = to_params(c);
    p.k = static_cast<int>(std::min<Index>(p.k, cloud.size()));
    DiffusionMapResult res = run_diffusion_map(cloud, p);

    fs::path out(c.out);
    save_matrix(cloud.points, (out / "input.csv").string(), FileFormat::Csv);
    save_embedding(res.embedding, (out / "embedding.csv").string(), FileFormat::Csv);
    dump_spectrum(res.decomposition.xi, res.decomposition.lambda,
                  (out / "spectrum.csv").string());
    save_matrix(res.decomposition.phi, (out / "phi.csv").string(), FileFormat::Csv);
    std::vector<std::vector<double>> norms;
    for (Index i = 0; i < cloud.size(); ++i)
        norms.push_back({static_cast<double>(i), res.decomposition.right_normalizer(i),
                         res.decomposition.left_normalizer(i), res.decomposition.q(i),
                         res.info.field.local_dim(i), res.info.field.epsilons(i)});
    write_csv_header_rows((out / "normalizers.csv").string(), "i,D,Dhat,q,dimension,eps",
                          norms);
    json diag;
    diag["command"] = "diffusion-map";
    diag["data"] = data;
    diag["params"] = params_json(p);
    diag["global_epsilon"] = res.info.global_epsilon;
    diag["s"] = res.info.s;
    diag["dropped_modes"] = res.info.dropped_modes;
    diag["checks"] = check_json(res.info.check);
    write_json(diag, (out / "diagnostics.json").string());
    std::cout << "embedded " << cloud.size() << " points, global eps "
              << res.info.global_epsilon << "\n";
    return 0;
}

// --------------------------------------------------------------------- idm

int cmd_idm(const CommonOpts& c, const std::string& data, const std::string& features,
            Index evolution_base, int evolution_count, const std::string& feature_embedding,
            bool cv_stop) {
    ensure_dir(c.out);
    PointCloud cloud = load_point_cloud(data);
    FeatureSet feat = load_features(features);
    IdmParams p = to_params(c);
    p.k = static_cast<int>(std::min<Index>(p.k, cloud.size()));
    p.cross_validation_stop = cv_stop;

    std::optional<DiffusionEmbedding> femb;
    if (!feature_embedding.empty())
        femb = load_embedding(feature_embedding, format_from_path(feature_embedding));
    IdmTrajectory traj = idm_run(cloud, feat, p, femb ? &*femb : nullptr);

    fs::path out(c.out);
    json manifest;
    manifest["command"] = "idm";
    manifest["data"] = data;
    manifest["features"] = features;
    manifest["params"] = params_json(p);
    manifest["iterations_run"] = traj.iterations.size();

    for (size_t ell = 0; ell < traj.embeddings.size(); ++ell) {
        char sub[32];
        std::snprintf(sub, sizeof(sub), "iter_%03zu", ell);
        fs::path dir = out / sub;
        ensure_dir(dir.string());
        save_embedding(traj.embeddings[ell], (dir / "embedding.csv").string(), FileFormat::Csv);
        if (ell == 0) continue;
        const IdmIteration& it = traj.iterations[ell - 1];
        dump_spectrum(it.xi, it.lambda, (dir / "eigenvalues.csv").string());
        std::vector<std::vector<double>> scan_rows;
        for (Index i = 0; i < it.field.size(); ++i)
            scan_rows.push_back({static_cast<double>(i), it.field.epsilons(i),
                                 it.field.local_dim(i), it.field.density(i)});
        write_csv_header_rows((dir / "scan_summary.csv").string(), "i,eps,dimension,density",
                              scan_rows);
        json diag;
        diag["global_epsilon"] = it.global_epsilon;
        diag["s"] = it.s;
        diag["dropped_modes"] = it.dropped_modes;
        diag["checks"] = check_json(it.check);
        if (std::isfinite(it.cv_residual)) diag["cv_residual"] = it.cv_residual;
        write_json(diag, (dir / "diagnostics.json").string());
    }

    if (evolution_count > 0) {
        int count = static_cast<int>(std::min<Index>(evolution_count, cloud.size()));
        auto evo = neighbor_evolution(traj, evolution_base, count);
        std::ofstream out_evo((out / "neighbor_evolution.csv").string());
        out_evo << "iteration";
        for (int j = 0; j < count; ++j) out_evo << ",n" << j;
        out_evo << '\n';
        for (size_t ell = 0; ell < evo.size(); ++ell) {
            out_evo << ell;
            for (int id : evo[ell]) out_evo << ',' << id;
            out_evo << '\n';
        }
        manifest["evolution"] = {{"base", evolution_base}, {"count", count}};
    }
    write_json(manifest, (out / "manifest.json").string());
    std::cout << "ran " << traj.iterations.size() << " iterations\n";
    return 0;
}

// -------------------------------------------------------------------- eval

Matrix load_traj_embedding(const fs::path& traj, size_t ell) {
    char sub[32];
    std::snprintf(sub, sizeof(sub), "iter_%03zu", ell);
    fs::path p = traj / sub / "embedding.csv";
    if (!fs::exists(p))
        throw IoError("eval: missing " + p.string() +
                      " (expected an idm output directory with iter_000/, iter_001/, ...)");
    return load_matrix_csv(p.string());
}

size_t traj_length(const fs::path& traj) {
    size_t n = 0;
    while (true) {
        char sub[32];
        std::snprintf(sub, sizeof(sub), "iter_%03zu", n);
        if (!fs::exists(traj / sub)) break;
        ++n;
    }
    if (n == 0)
        throw IoError("eval: no iter_000 directory under " + traj.string() +
                      " (expected an idm output directory)");
    return n;
}

int cmd_eval_distances(const CommonOpts& c, const std::string& model,
                       std::vector<double> times, Index base) {
    ensure_dir(c.out);
    fs::path mdir(model);
    for (const char* req : {"phi.csv", "spectrum.csv", "normalizers.csv", "input.csv"})
        if (!fs::exists(mdir / req))
            throw IoError("eval distances: missing " + (mdir / req).string() +
                          " (expected a diffusion-map output directory)");
    Matrix phi = load_matrix_csv((mdir / "phi.csv").string());
    Matrix spectrum = load_matrix_csv((mdir / "spectrum.csv").string());
    Matrix normalizers = load_matrix_csv((mdir / "normalizers.csv").string());
    Matrix input = load_matrix_csv((mdir / "input.csv").string());
    if (times.empty()) times = {1e-4, 1e-3, 1e-2};

    const Index n = phi.rows();
    if (base < 0 || base >= n) throw ParameterError("eval distances: base out of range");
    Vector lambda = spectrum.col(2);
    Vector dims = normalizers.col(4);

    // geodesics are reported when the input is recognizably the unit circle
    bool is_circle = input.cols() == 2;
    for (Index i = 0; i < n && is_circle; ++i)
        if (std::abs(input.row(i).norm() - 1.0) > 1e-9) is_circle = false;

    std::ofstream out((fs::path(c.out) / "distances.csv").string());
    out << "j,euclid" << (is_circle ? ",geodesic" : "");
    for (double t : times) out << ",dhat_t" << t;
    out << '\n';
    for (Index j = 0; j < n; ++j) {
        if (j == base) continue;
        out << j << ',' << detail::format_double((input.row(j) - input.row(base)).norm());
        if (is_circle) {
            double a0 = std::atan2(input(base, 1), input(base, 0));
            double a1 = std::atan2(input(j, 1), input(j, 0));
            double dg = std::abs(std::remainder(a1 - a0, 2.0 * M_PI));
            out << ',' << detail::format_double(dg);
        }
        for (double t : times) {
            double pref_i = std::pow(2.0 * M_PI, dims(base) / 4.0) *
                            std::pow(4.0 * t, dims(base) / 4.0 + 0.5);
            double pref_j =
                std::pow(2.0 * M_PI, dims(j) / 4.0) * std::pow(4.0 * t, dims(j) / 4.0 + 0.5);
            double acc = 0.0;
            for (Index r = 1; r < phi.cols(); ++r) {
                double w = std::exp(lambda(r) * t);
                double d = pref_i * w * phi(base, r) - pref_j * w * phi(j, r);
                acc += d * d;
            }
            out << ',' << detail::format_double(std::sqrt(acc));
        }
        out << '\n';
    }
    std::cout << "wrote distance curves for base point " << base << "\n";
    return 0;
}

int cmd_eval_neighbors(const CommonOpts& c, const std::string& traj, Index base, int count) {
    ensure_dir(c.out);
    fs::path tdir(traj);
    size_t len = traj_length(tdir);
    std::ofstream out((fs::path(c.out) / "neighbors.csv").string());
    out << "iteration";
    for (int j = 0; j < count; ++j) out << ",n" << j;
    out << '\n';
    for (size_t ell = 0; ell < len; ++ell) {
        Matrix coords = load_traj_embedding(tdir, ell);
        auto nbrs = nearest_to(coords, coords.row(base), count);
        out << ell;
        for (auto& [id, d] : nbrs) out << ',' << id;
        out << '\n';
    }
    std::cout << "wrote neighbor lists over " << len << " iterations\n";
    return 0;
}

int cmd_eval_decoder(const CommonOpts& c, const std::string& traj,
                     const std::string& feature_embedding) {
    ensure_dir(c.out);
    if (feature_embedding.empty())
        throw ParameterError("eval decoder: --feature-embedding is required");
    fs::path tdir(traj);
    size_t len = traj_length(tdir);
    DiffusionEmbedding femb =
        load_embedding(feature_embedding, format_from_path(feature_embedding));
    std::vector<std::vector<double>> rows;
    LinearFeatureDecoder final_dec;
    for (size_t ell = 1; ell < len; ++ell) {
        Matrix coords = load_traj_embedding(tdir, ell);
        LinearFeatureDecoder dec = fit_linear_decoder(coords, femb.coords);
        rows.push_back({static_cast<double>(ell), dec.residual,
                        static_cast<double>(dec.rank_deficient)});
        if (ell == len - 1) final_dec = dec;
    }
    if (rows.empty()) throw IoError("eval decoder: trajectory has no iterations");
    write_csv_header_rows((fs::path(c.out) / "decoder_residuals.csv").string(),
                          "iteration,residual,rank_deficient", rows);
    save_matrix(final_dec.map, (fs::path(c.out) / "decoder_map.csv").string(), FileFormat::Csv);
    std::cout << "final decoder residual " << final_dec.residual << "\n";
    return 0;
}

int cmd_eval_fixedpoint(const CommonOpts& c, const std::string& data,
                        const std::string& features) {
    ensure_dir(c.out);
    PointCloud cloud = load_point_cloud(data);
    FeatureSet feat = load_features(features);
    int k = static_cast<int>(std::min<Index>(c.k, cloud.size()));
    double residual = fixed_point_residual(cloud, feat, k, c.grid, c.scan_mode());
    json report;
    report["residual"] = residual;
    report["fixed_point"] = residual < 0.1;
    write_json(report, (fs::path(c.out) / "fixedpoint.json").string());
    std::cout << "fixed-point residual " << residual << "\n";
    return 0;
}

// ----------------------------------------------------------------- nystrom

int cmd_nystrom(const CommonOpts& c, const std::string& model, const std::string& points) {
    ensure_dir(c.out);
    fs::path mdir(model);
    for (const char* req : {"phi.csv", "spectrum.csv", "normalizers.csv", "input.csv",
                            "diagnostics.json"})
        if (!fs::exists(mdir / req))
            throw IoError("nystrom: missing " + (mdir / req).string() +
                          " (expected a diffusion-map output directory)");
    PointCloud training{load_matrix_csv((mdir / "input.csv").string())};
    Matrix phi = load_matrix_csv((mdir / "phi.csv").string());
    Matrix spectrum = load_matrix_csv((mdir / "spectrum.csv").string());
    Matrix normalizers = load_matrix_csv((mdir / "normalizers.csv").string());
    json diag = load_json((mdir / "diagnostics.json").string());

    SpectralDecomposition dec;
    dec.xi = spectrum.col(1);
    dec.lambda = spectrum.col(2);
    dec.phi = phi;
    dec.right_normalizer = normalizers.col(1);
    dec.left_normalizer = normalizers.col(2);
    dec.q = normalizers.col(3);
    dec.epsilon = diag.at("global_epsilon").get<double>();
    dec.density_normalized = true;

    int k = static_cast<int>(std::min<Index>(c.k, training.size()));
    NeighborGraph graph = knn(training, k);
    KernelRecipe recipe;
    recipe.epsilon = dec.epsilon;
    recipe.k = k;

    RescaledMapParams mp;
    mp.s = diag.at("s").get<double>();
    mp.modes = static_cast<int>(phi.cols()) - 1;
    mp.local_dims = normalizers.col(4);

    Matrix queries = load_matrix_csv(points);
    if (queries.cols() != training.dim())
        throw ShapeError("nystrom: query dimension does not match training data");
    Matrix phi_out(queries.rows(), phi.cols());
    Matrix emb_out(queries.rows(), mp.modes);
    int warnings = 0;
    for (Index i = 0; i < queries.rows(); ++i) {
        NystromResult r = nystrom_extend(queries.row(i), training, graph, dec, recipe, &mp);
        phi_out.row(i) = r.phi_row.transpose();
        emb_out.row(i) = r.embedding;
        if (r.extrapolation) ++warnings;
    }
    save_matrix(phi_out, (fs::path(c.out) / "phi_extended.csv").string(), FileFormat::Csv);
    save_matrix(emb_out, (fs::path(c.out) / "embedding_extended.csv").string(),
                FileFormat::Csv);
    if (warnings)
        std::cerr << "warning: " << warnings
                  << " query point(s) beyond the sampled region; their rows decay to zero\n";
    std::cout << "extended " << queries.rows() << " points\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"iterated diffusion maps for feature identification"};
    app.require_subcommand(1);

    CommonOpts c;

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic fixture");
    std::string fixture;
    Index gen_n = 2000, gen_grid = 100;
    double gen_noise = 0.0;
    gen->add_option("fixture", fixture, "circle|annulus|torus|torus30|sphere")->required();
    gen->add_option("--n", gen_n, "sample count (circle/annulus/sphere)");
    gen->add_option("--grid-size", gen_grid, "grid size (torus/torus30)");
    gen->add_option("--noise", gen_noise, "gaussian noise covariance scale");
    add_common(gen, c);

    // tune
    auto* tune = app.add_subcommand("tune", "bandwidth/dimension scan tables");
    std::string tune_data;
    std::vector<Index> tune_points;
    bool tune_all = false;
    tune->add_option("--data", tune_data, "point cloud file")->required();
    tune->add_option("--point", tune_points, "base point index (repeatable)");
    tune->add_flag("--all", tune_all, "also dump a per-point selection summary");
    add_common(tune, c);

    // derivative
    auto* deriv = app.add_subcommand("derivative", "auto-tuned derivative field");
    std::string deriv_data, deriv_features;
    deriv->add_option("--data", deriv_data)->required();
    deriv->add_option("--features", deriv_features)->required();
    add_common(deriv, c);

    // diffusion-map
    auto* dmap = app.add_subcommand("diffusion-map", "one isotropic rescaled diffusion map");
    std::string dmap_data;
    dmap->add_option("--data", dmap_data)->required();
    add_common(dmap, c);

    // idm
    auto* idmc = app.add_subcommand("idm", "iterated diffusion map");
    std::string idm_data, idm_features, idm_femb;
    Index evo_base = 0;
    int evo_count = 200;
    bool cv_stop = false;
    idmc->add_option("--data", idm_data)->required();
    idmc->add_option("--features", idm_features)->required();
    idmc->add_option("--evolution-base", evo_base, "neighbor-evolution base point");
    idmc->add_option("--evolution-count", evo_count, "neighbor-evolution list size (0 = off)");
    idmc->add_option("--feature-embedding", idm_femb,
                     "feature diffusion embedding (enables --cv-stop)");
    idmc->add_flag("--cv-stop", cv_stop, "stop when the holdout decoder residual worsens");
    add_common(idmc, c);

    // eval
    auto* eval = app.add_subcommand("eval", "diagnostics over stored runs");
    std::string which, eval_traj, eval_model, eval_data, eval_features, eval_femb;
    std::vector<double> eval_times;
    Index eval_base = 0;
    int eval_count = 200;
    eval->add_option("which", which, "distances|neighbors|decoder|fixedpoint")->required();
    eval->add_option("--traj", eval_traj, "idm output directory");
    eval->add_option("--model", eval_model, "diffusion-map output directory");
    eval->add_option("--data", eval_data, "point cloud (fixedpoint)");
    eval->add_option("--features", eval_features, "feature file (fixedpoint)");
    eval->add_option("--feature-embedding", eval_femb, "feature embedding file (decoder)");
    eval->add_option("--t", eval_times, "diffusion times (distances, repeatable)");
    eval->add_option("--base", eval_base, "base point");
    eval->add_option("--count", eval_count, "neighbor count");
    add_common(eval, c);

    // nystrom
    auto* nys = app.add_subcommand("nystrom", "out-of-sample extension");
    std::string nys_model, nys_points;
    nys->add_option("--model", nys_model, "diffusion-map output directory")->required();
    nys->add_option("--points", nys_points, "new points file")->required();
    add_common(nys, c);

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().front();
        apply_config(sub, c);
        setup_threads(c.threads);
        if (sub == gen) return cmd_generate(c, fixture, gen_n, gen_grid, gen_noise);
        if (sub == tune) return cmd_tune(c, tune_data, tune_points, tune_all);
        if (sub == deriv) return cmd_derivative(c, deriv_data, deriv_features);
        if (sub == dmap) return cmd_diffusion_map(c, dmap_data);
        if (sub == idmc)
            return cmd_idm(c, idm_data, idm_features, evo_base, evo_count, idm_femb, cv_stop);
        if (sub == eval) {
            if (which == "distances")
                return cmd_eval_distances(c, eval_model, eval_times, eval_base);
            if (which == "neighbors")
                return cmd_eval_neighbors(c, eval_traj, eval_base, eval_count);
            if (which == "decoder") return cmd_eval_decoder(c, eval_traj, eval_femb);
            if (which == "fixedpoint") return cmd_eval_fixedpoint(c, eval_data, eval_features);
            throw ParameterError("eval: unknown diagnostic '" + which + "'");
        }
        if (sub == nys) return cmd_nystrom(c, nys_model, nys_points);
        throw ParameterError("no subcommand");
    } catch (const ParameterError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
