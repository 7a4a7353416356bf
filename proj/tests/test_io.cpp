#include <catch2/catch.hpp>

#include "idm/io.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace idm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("idm_io_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

} // namespace

TEST_CASE("csv point cloud load") {
    TempDir tmp;
    write_text(tmp.file("pts.csv"), "1,2\n3,4\n5,6\n");
    PointCloud c = load_point_cloud(tmp.file("pts.csv"), FileFormat::Csv);
    REQUIRE(c.size() == 3);
    REQUIRE(c.dim() == 2);
    REQUIRE(c.points(2, 1) == 6.0);
}

TEST_CASE("csv load failures") {
    TempDir tmp;

    write_text(tmp.file("empty.csv"), "");
    REQUIRE_THROWS_AS(load_point_cloud(tmp.file("empty.csv"), FileFormat::Csv), ShapeError);

    write_text(tmp.file("nan.csv"), "1,2\n3,NaN\n");
    try {
        load_point_cloud(tmp.file("nan.csv"), FileFormat::Csv);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        std::string msg = e.what();
        REQUIRE(msg.find("row 2") != std::string::npos);
        REQUIRE(msg.find("column 2") != std::string::npos);
    }

    write_text(tmp.file("ragged.csv"), "1,2\n3\n");
    REQUIRE_THROWS_AS(load_matrix_csv(tmp.file("ragged.csv")), ShapeError);

    write_text(tmp.file("garbage.csv"), "1,2\nx,4\n");
    try {
        load_matrix_csv(tmp.file("garbage.csv"));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        std::string msg = e.what();
        REQUIRE(msg.find("row 2") != std::string::npos);
        REQUIRE(msg.find("column 1") != std::string::npos);
    }

    REQUIRE_THROWS_AS(load_matrix_csv(tmp.file("missing.csv")), IoError);
}

TEST_CASE("round trips are bit exact") {
    TempDir tmp;
    std::mt19937_64 rng(11);
    Matrix m(17, 5);
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) {
            double u = static_cast<double>(rng()) / 1.8446744073709552e19;
            m(i, j) = std::ldexp(u - 0.5, static_cast<int>(rng() % 64) - 32);
        }
    m(0, 0) = 0.1;
    m(1, 1) = -1.0 / 3.0;
    m(2, 2) = 1e-300;
    m(3, 3) = 12345678901234567.0;

    save_matrix(m, tmp.file("m.csv"), FileFormat::Csv);
    Matrix back = load_matrix(tmp.file("m.csv"), FileFormat::Csv);
    REQUIRE(back.rows() == m.rows());
    REQUIRE((back.array() == m.array()).all());

    save_matrix(m, tmp.file("m.json"), FileFormat::Json);
    Matrix backj = load_matrix(tmp.file("m.json"), FileFormat::Json);
    REQUIRE((backj.array() == m.array()).all());
}

TEST_CASE("embedding save and load") {
    TempDir tmp;
    DiffusionEmbedding e;
    e.coords = Matrix::Random(8, 250);
    e.iteration = 3;
    e.s = 0.0123;
    e.local_dims = Vector::Constant(8, 1.5);

    save_embedding(e, tmp.file("emb.csv"), FileFormat::Csv);
    REQUIRE(fs::exists(tmp.file("emb.csv.meta.json")));
    {
        // 250 coordinate columns in the csv
        std::ifstream in(tmp.file("emb.csv"));
        std::string line;
        std::getline(in, line);
        REQUIRE(std::count(line.begin(), line.end(), ',') == 249);
    }
    DiffusionEmbedding back = load_embedding(tmp.file("emb.csv"), FileFormat::Csv);
    REQUIRE((back.coords.array() == e.coords.array()).all());
    REQUIRE(back.iteration == 3);
    REQUIRE(back.s == e.s);
    REQUIRE((back.local_dims.array() == e.local_dims.array()).all());

    save_embedding(e, tmp.file("emb.json"), FileFormat::Json);
    DiffusionEmbedding backj = load_embedding(tmp.file("emb.json"), FileFormat::Json);
    REQUIRE((backj.coords.array() == e.coords.array()).all());
    REQUIRE(backj.s == e.s);

    REQUIRE_THROWS_AS(save_embedding(e, "/nonexistent_dir_xyz/emb.csv", FileFormat::Csv), IoError);
}

TEST_CASE("validation rejects non-finite and misaligned inputs") {
    Matrix bad(2, 2);
    bad << 1.0, 2.0, std::numeric_limits<double>::infinity(), 4.0;
    REQUIRE_THROWS_AS(PointCloud::validated(bad), ValidationError);
    Matrix ok = Matrix::Zero(3, 2);
    REQUIRE_THROWS_AS(FeatureSet::validated(ok, 5), ShapeError);
}
