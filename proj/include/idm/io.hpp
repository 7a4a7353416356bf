#pragma once

#include "idm/types.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace idm {

enum class FileFormat { Csv, Json };

inline FileFormat format_from_path(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".json") return FileFormat::Json;
    return FileFormat::Csv;
}

namespace detail {

// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& tok, Index row, Index col) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
    double v = 0.0;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw FormatError("cannot parse numeric value at row " + std::to_string(row + 1) +
                          ", column " + std::to_string(col + 1) + ": '" + tok + "'");
    if (!std::isfinite(v))
        throw ValidationError("non-finite value at row " + std::to_string(row + 1) +
                              ", column " + std::to_string(col + 1));
    return v;
}

} // namespace detail

/// Writes a matrix as headerless CSV, one row per line, full precision.
inline void save_matrix_csv(const Matrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << detail::format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

inline Matrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    Index rowno = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) { ++rowno; continue; }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string tok;
        Index col = 0;
        while (std::getline(ss, tok, ',')) {
            row.push_back(detail::parse_double(tok, rowno, col));
            ++col;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ShapeError("ragged row " + std::to_string(rowno + 1) + ": expected " +
                             std::to_string(rows.front().size()) + " columns, got " +
                             std::to_string(row.size()));
        rows.push_back(std::move(row));
        ++rowno;
    }
    if (rows.empty()) throw ShapeError("no data rows in " + path);
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
            m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    return m;
}

inline nlohmann::json matrix_to_json(const Matrix& m, nlohmann::json meta = {}) {
    nlohmann::json j;
    j["shape"] = {m.rows(), m.cols()};
    auto data = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Index jx = 0; jx < m.cols(); ++jx) row.push_back(m(i, jx));
        data.push_back(std::move(row));
    }
    j["data"] = std::move(data);
    j["meta"] = std::move(meta);
    return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.contains("shape") || !j.contains("data"))
        throw FormatError("JSON matrix object requires 'shape' and 'data' keys");
    Index rows = j["shape"][0].get<Index>();
    Index cols = j["shape"][1].get<Index>();
    const auto& data = j["data"];
    if (static_cast<Index>(data.size()) != rows)
        throw ShapeError("JSON 'data' row count does not match 'shape'");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& row = data[static_cast<size_t>(i)];
        if (static_cast<Index>(row.size()) != cols)
            throw ShapeError("ragged row " + std::to_string(i + 1) + " in JSON 'data'");
        for (Index c = 0; c < cols; ++c) {
            double v = row[static_cast<size_t>(c)].get<double>();
            if (!std::isfinite(v))
                throw ValidationError("non-finite value at row " + std::to_string(i + 1) +
                                      ", column " + std::to_string(c + 1));
            m(i, c) = v;
        }
    }
    return m;
}

inline void save_matrix_json(const Matrix& m, const std::string& path, nlohmann::json meta = {}) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << matrix_to_json(m, std::move(meta)).dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("JSON parse failure in " + path + ": " + e.what());
    }
    return j;
}

inline void save_matrix(const Matrix& m, const std::string& path, FileFormat fmt) {
    if (fmt == FileFormat::Csv) save_matrix_csv(m, path);
    else save_matrix_json(m, path);
}

inline Matrix load_matrix(const std::string& path, FileFormat fmt) {
    if (fmt == FileFormat::Csv) return load_matrix_csv(path);
    return matrix_from_json(load_json(path));
}

inline PointCloud load_point_cloud(const std::string& path, FileFormat fmt) {
    return PointCloud::validated(load_matrix(path, fmt));
}

inline PointCloud load_point_cloud(const std::string& path) {
    return load_point_cloud(path, format_from_path(path));
}

inline FeatureSet load_features(const std::string& path, FileFormat fmt) {
    return FeatureSet::validated(load_matrix(path, fmt));
}

inline FeatureSet load_features(const std::string& path) {
    return load_features(path, format_from_path(path));
}

namespace detail {

inline nlohmann::json embedding_meta(const DiffusionEmbedding& e) {
    nlohmann::json meta;
    meta["kind"] = "diffusion_embedding";
    meta["iteration"] = e.iteration;
    meta["s"] = e.s;
    meta["local_dims"] = std::vector<double>(e.local_dims.data(),
                                             e.local_dims.data() + e.local_dims.size());
    return meta;
}

inline void apply_embedding_meta(DiffusionEmbedding& e, const nlohmann::json& meta) {
    e.iteration = meta.value("iteration", 0);
    e.s = meta.value("s", 0.0);
    if (meta.contains("local_dims")) {
        auto v = meta["local_dims"].get<std::vector<double>>();
        e.local_dims = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
    }
}

} // namespace detail

/// CSV keeps the coordinate block headerless and puts iteration/s/local
/// dims in a '<path>.meta.json' sidecar; JSON stores one self-contained
/// object. Both round-trip bit-exactly through load_embedding.
inline void save_embedding(const DiffusionEmbedding& e, const std::string& path, FileFormat fmt) {
    if (fmt == FileFormat::Csv) {
        save_matrix_csv(e.coords, path);
        std::ofstream out(path + ".meta.json");
        if (!out) throw IoError("cannot open for writing: " + path + ".meta.json");
        out << detail::embedding_meta(e).dump(1) << '\n';
        if (!out) throw IoError("write failed: " + path + ".meta.json");
    } else {
        save_matrix_json(e.coords, path, detail::embedding_meta(e));
    }
}

inline DiffusionEmbedding load_embedding(const std::string& path, FileFormat fmt) {
    DiffusionEmbedding e;
    if (fmt == FileFormat::Csv) {
        e.coords = load_matrix_csv(path);
        std::filesystem::path sidecar(path + ".meta.json");
        if (std::filesystem::exists(sidecar))
            detail::apply_embedding_meta(e, load_json(sidecar.string()));
    } else {
        auto j = load_json(path);
        e.coords = matrix_from_json(j);
        if (j.contains("meta")) detail::apply_embedding_meta(e, j["meta"]);
    }
    if (!e.coords.allFinite()) throw ValidationError("embedding contains non-finite entries");
    return e;
}

} // namespace idm
