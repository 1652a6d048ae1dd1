// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <regex>
#include <string>

#include "support.hpp"
#include "tli/numcore/error.hpp"
#include "tli/numcore/text.hpp"
#include "tli/viz/viz.hpp"

using namespace tli;
using tli_test::count_occurrences;
using tli_test::random_matrix;
using tli_test::read_file;
using tli_test::TempDir;

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& line : split(read_file(path), '\n')) {
        if (!line.empty()) {
            rows.push_back(split(line, ','));
        }
    }
    return rows;
}

double distance(const Point2& a, const Point2& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

/// Leading eigenpairs by power iteration with deflation.
std::vector<std::pair<double, std::vector<double>>> power_eigen(std::vector<double> m,
                                                                std::size_t n, std::size_t k) {
    std::vector<std::pair<double, std::vector<double>>> out;
    for (std::size_t e = 0; e < k; ++e) {
        std::vector<double> v(n, 1.0);
        v[e % n] += 0.5;
        double lambda = 0.0;
        for (int it = 0; it < 20000; ++it) {
            std::vector<double> w(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    w[i] += m[i * n + j] * v[j];
                }
            }
            double norm = 0.0;
            for (const double x : w) {
                norm += x * x;
            }
            norm = std::sqrt(norm);
            for (std::size_t i = 0; i < n; ++i) {
                v[i] = w[i] / norm;
            }
            lambda = norm;
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                m[i * n + j] -= lambda * v[i] * v[j];
            }
        }
        out.emplace_back(lambda, v);
    }
    return out;
}

std::vector<double> covariance(const Tensor& x) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] += x.at(i, j) / static_cast<double>(n);
        }
    }
    std::vector<double> c(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b) {
                c[a * d + b] += (x.at(i, a) - mean[a]) * (x.at(i, b) - mean[b]) /
                                static_cast<double>(n - 1);
            }
        }
    }
    return c;
}

LayerScanResult fake_scan(std::size_t layers) {
    LayerScanResult r;
    for (std::size_t l = 0; l < layers; ++l) {
        const double x = static_cast<double>(l) / static_cast<double>(layers);
        r.per_layer_mean_sim.push_back(0.2 + 0.7 * std::sin(3.0 * x) * std::exp(-x));
        r.per_layer_std.push_back(0.01 * static_cast<double>(l % 5));
    }
    r.peak_layer = static_cast<std::size_t>(
        std::max_element(r.per_layer_mean_sim.begin(), r.per_layer_mean_sim.end()) -
        r.per_layer_mean_sim.begin());
    r.pair_count = 10;
    return r;
}

Projection2D sample_projection(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Point2> pts(2 * n);
    for (auto& p : pts) {
        p = {rng.normal(), rng.normal()};
    }
    std::vector<std::string> src;
    std::vector<std::string> tgt;
    for (std::size_t i = 0; i < n; ++i) {
        src.push_back("chanzo" + std::to_string(i));
        tgt.push_back("target" + std::to_string(i));
    }
    return paired_projection(pts, src, tgt);
}

std::string attr(const std::string& element, const std::string& name) {
    const std::regex re(name + "=\"([^\"]*)\"");
    std::smatch m;
    REQUIRE(std::regex_search(element, m, re));
    return m[1];
}

std::vector<std::string> elements(const std::string& svg, const std::string& prefix) {
    std::vector<std::string> out;
    for (auto pos = svg.find(prefix); pos != std::string::npos; pos = svg.find(prefix, pos + 1)) {
        out.push_back(svg.substr(pos, svg.find('>', pos) - pos + 1));
    }
    return out;
}

} // namespace

// ----------------------------------------------------------------------- PCA

TEST_CASE("pca of collinear points puts everything on the first axis") {
    std::vector<double> v;
    for (int i = 0; i < 10; ++i) {
        const double t = 0.3 * i - 1.0;
        v.insert(v.end(), {1.0 + 2.0 * t, -0.5 + t, 3.0 - 0.5 * t});
    }
    const auto r = pca_2d(Tensor::matrix(10, 3, v));
    for (const auto& p : r.coords) {
        CHECK(std::abs(p[1]) < 1e-9);
    }
    CHECK(r.explained_variance[1] < 1e-12);
    CHECK(r.explained_variance[0] > 0.0);
}

TEST_CASE("pca of two-dimensional data is an isometry") {
    Rng rng(4);
    const auto x = random_matrix(12, 2, rng);
    const auto r = pca_2d(x);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = 0; j < 12; ++j) {
            const double dx = std::hypot(x.at(i, 0) - x.at(j, 0), x.at(i, 1) - x.at(j, 1));
            CHECK(std::abs(distance(r.coords[i], r.coords[j]) - dx) < 1e-10);
        }
    }
}

TEST_CASE("pca matches a power-iteration oracle") {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        // Anisotropic scales separate the eigenvalues.
        auto x = random_matrix(30, 5, rng);
        auto d = x.mutable_data();
        for (std::size_t i = 0; i < 30; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                d[i * 5 + j] *= 5.0 - static_cast<double>(j);
            }
        }
        const auto r = pca_2d(x);
        const auto oracle = power_eigen(covariance(x), 5, 2);
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(r.explained_variance[k] == doctest::Approx(oracle[k].first).epsilon(1e-8));
            double dotp = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                dotp += r.components[k][j] * oracle[k].second[j];
            }
            CHECK(std::abs(std::abs(dotp) - 1.0) < 1e-8);
        }
    }
}

TEST_CASE("pca output is centered and follows the sign convention") {
    Rng rng(7);
    auto x = random_matrix(20, 4, rng);
    for (double& v : x.mutable_data()) {
        v += 10.0;
    }
    const auto r = pca_2d(x);
    for (std::size_t k = 0; k < 2; ++k) {
        double s = 0.0;
        for (const auto& p : r.coords) {
            s += p[k];
        }
        CHECK(std::abs(s) < 1e-9);
        const auto& comp = r.components[k];
        const auto first = std::find_if(comp.begin(), comp.end(),
                                        [](double c) { return std::abs(c) > 1e-12; });
        REQUIRE(first != comp.end());
        CHECK(*first > 0.0);
    }
    CHECK(r.explained_variance[0] >= r.explained_variance[1]);
}

TEST_CASE("pca rejects too few points, dimensions or variance") {
    Rng rng(1);
    CHECK_THROWS_AS(pca_2d(random_matrix(2, 4, rng)), ContractError);
    CHECK_THROWS_AS(pca_2d(random_matrix(5, 1, rng)), ContractError);
    CHECK_THROWS_AS(pca_2d(Tensor::filled({4, 3}, 2.0)), ContractError);
    CHECK_THROWS_AS(pca_2d(Tensor::vector({1, 2, 3})), DimensionError);
}

TEST_CASE("symmetric_eigen reconstructs the matrix") {
    Rng rng(3);
    const std::size_t n = 6;
    auto m = random_matrix(n, n, rng);
    std::vector<double> s(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            s[i * n + j] = m.at(i, j) + m.at(j, i);
        }
    }
    const auto e = symmetric_eigen(s, n);
    CHECK(std::is_sorted(e.values.rbegin(), e.values.rend()));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                acc += e.values[k] * e.vectors[k][i] * e.vectors[k][j];
            }
            CHECK(std::abs(acc - s[i * n + j]) < 1e-9);
        }
    }
}

// --------------------------------------------------------------------- t-SNE

TEST_CASE("t-SNE input affinities form a symmetric distribution") {
    Rng rng(5);
    const auto x = random_matrix(25, 6, rng);
    const auto p = tsne_affinities(x, 5.0);
    double total = 0.0;
    for (std::size_t i = 0; i < 25; ++i) {
        CHECK(p[i * 25 + i] == 0.0);
        for (std::size_t j = 0; j < 25; ++j) {
            CHECK(p[i * 25 + j] >= 0.0);
            CHECK(p[i * 25 + j] == doctest::Approx(p[j * 25 + i]).epsilon(1e-14));
            total += p[i * 25 + j];
        }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("t-SNE affinities are uniform when all points are equidistant") {
    // Scaled basis vectors: every pairwise distance is the same.
    const std::size_t n = 9;
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        v[i * n + i] = 3.0;
    }
    const auto p = tsne_affinities(Tensor::matrix(n, n, v), 2.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double expected = i == j ? 0.0 : 1.0 / static_cast<double>(n * (n - 1));
            CHECK(p[i * n + j] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("t-SNE output affinities are a valid distribution") {
    const std::vector<Point2> y{{0, 0}, {1, 0}, {0, 2}, {-1, -1}};
    const auto q = tsne_output_affinities(y);
    double total = 0.0;
    double z = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            if (i != j) {
                const double d2 = std::pow(distance(y[i], y[j]), 2);
                z += 1.0 / (1.0 + d2);
            }
        }
    }
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(q[i * 4 + i] == 0.0);
        for (std::size_t j = 0; j < 4; ++j) {
            total += q[i * 4 + j];
            if (i != j) {
                const double d2 = std::pow(distance(y[i], y[j]), 2);
                CHECK(q[i * 4 + j] == doctest::Approx(1.0 / (1.0 + d2) / z).epsilon(1e-12));
            }
        }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("t-SNE keeps a duplicated point next to its twin and is deterministic") {
    Rng rng(9);
    auto x = random_matrix(30, 8, rng);
    auto d = x.mutable_data();
    for (std::size_t k = 0; k < 8; ++k) {
        d[29 * 8 + k] = d[3 * 8 + k];
    }
    TsneConfig cfg;
    cfg.perplexity = 5.0;
    const auto r = tsne_2d(x, cfg);
    REQUIRE(r.coords.size() == 30);
    for (std::size_t i = 0; i < 30; ++i) {
        if (i != 3 && i != 29) {
            CHECK(distance(r.coords[3], r.coords[29]) < distance(r.coords[3], r.coords[i]));
        }
    }
    CHECK(std::isfinite(r.kl_divergence));
    CHECK(r.kl_divergence >= 0.0);
    const auto again = tsne_2d(x, cfg);
    CHECK(again.coords == r.coords);
    cfg.seed = 43;
    CHECK(tsne_2d(x, cfg).coords != r.coords);
}

TEST_CASE("t-SNE rejects perplexities outside [1, N/3)") {
    Rng rng(2);
    const auto x = random_matrix(12, 3, rng);
    TsneConfig cfg;
    cfg.perplexity = 4.0;
    CHECK_THROWS_AS(tsne_2d(x, cfg), ContractError);
    cfg.perplexity = 0.5;
    CHECK_THROWS_AS(tsne_2d(x, cfg), ContractError);
    cfg.perplexity = 3.9;
    cfg.iterations = 10;
    CHECK_NOTHROW(tsne_2d(x, cfg));
}

// ----------------------------------------------------------------- rendering

TEST_CASE("layer curve has one point per layer and one peak marker") {
    TempDir dir;
    const auto scan = fake_scan(34);
    const auto files = render_layer_curve(scan, scan.peak_layer, dir / "curve.svg");
    CHECK(files.image == dir / "curve.svg");
    CHECK(files.data == dir / "curve.csv");
    const auto svg = read_file(files.image);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count_occurrences(svg, "class=\"point\"") == 34);
    CHECK(count_occurrences(svg, "class=\"peak-marker\"") == 1);
    const auto plot = elements(svg, "<g class=\"plot\"");
    REQUIRE(plot.size() == 1);
    const double lowest =
        *std::min_element(scan.per_layer_mean_sim.begin(), scan.per_layer_mean_sim.end());
    CHECK(parse_double(attr(plot[0], "data-y-min"), "y-min") ==
          doctest::Approx(lowest - 0.05).epsilon(1e-15));
    CHECK(parse_double(attr(plot[0], "data-y-max"), "y-max") == 1.0);

    // Sidecar round-trips the scan exactly.
    const auto rows = read_csv_rows(files.data);
    REQUIRE(rows.size() == 35);
    CHECK(rows[0] == std::vector<std::string>{"layer", "mean_sim", "std_sim"});
    for (std::size_t l = 0; l < 34; ++l) {
        CHECK(rows[l + 1][0] == std::to_string(l));
        CHECK(parse_double(rows[l + 1][1], "mean") == scan.per_layer_mean_sim[l]);
        CHECK(parse_double(rows[l + 1][2], "std") == scan.per_layer_std[l]);
    }
}

TEST_CASE("peak marker sits on the peak layer's point") {
    TempDir dir;
    const auto scan = fake_scan(6);
    const auto svg = read_file(render_layer_curve(scan, 4, dir / "c.svg").image);
    const auto marker = elements(svg, "<line class=\"peak-marker\"");
    const auto points = elements(svg, "<circle class=\"point\"");
    REQUIRE(marker.size() == 1);
    REQUIRE(points.size() == 6);
    CHECK(attr(marker[0], "x1") == attr(points[4], "cx"));
    CHECK_THROWS_AS(render_layer_curve(scan, 6, dir / "bad.svg"), ContractError);
    CHECK_THROWS_AS(render_layer_curve(LayerScanResult{}, 0, dir / "bad.svg"), ContractError);
}

TEST_CASE("projection has N links and 2N markers tied to the sidecar") {
    TempDir dir;
    const std::size_t n = 7;
    const auto proj = sample_projection(n, 3);
    const auto files = render_projection(proj, dir / "proj.svg");
    const auto svg = read_file(files.image);
    const auto links = elements(svg, "<line class=\"link\"");
    CHECK(links.size() == n);
    CHECK(count_occurrences(svg, "class=\"marker ") == 2 * n);
    CHECK(count_occurrences(svg, "class=\"marker source\"") == n);
    CHECK(count_occurrences(svg, "fill=\"blue\"/>\n") >= n);

    const auto rows = read_csv_rows(files.data);
    REQUIRE(rows.size() == 2 * n + 1);
    CHECK(rows[0] == std::vector<std::string>{"index", "label", "language", "x", "y", "px", "py"});
    for (std::size_t i = 0; i < 2 * n; ++i) {
        const auto& row = rows[i + 1];
        CHECK(row[1] == proj.labels[i]);
        CHECK(row[2] == (i < n ? "source" : "target"));
        CHECK(parse_double(row[3], "x") == proj.points[i][0]);
        CHECK(parse_double(row[4], "y") == proj.points[i][1]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& src = rows[i + 1];
        const auto& tgt = rows[n + i + 1];
        CHECK(attr(links[i], "x1") == src[5]);
        CHECK(attr(links[i], "y1") == src[6]);
        CHECK(attr(links[i], "x2") == tgt[5]);
        CHECK(attr(links[i], "y2") == tgt[6]);
    }
}

TEST_CASE("projection without links and with awkward labels") {
    TempDir dir;
    Projection2D proj;
    proj.points = {{0, 0}, {1, 1}, {2, 0.5}};
    proj.labels = {"a,b", "say \"hi\"", "<x>"};
    proj.tags = {LanguageTag::source, LanguageTag::target, LanguageTag::target};
    const auto files = render_projection(proj, dir / "p.svg");
    const auto svg = read_file(files.image);
    CHECK(count_occurrences(svg, "class=\"link\"") == 0);
    CHECK(count_occurrences(svg, "class=\"marker ") == 3);
    CHECK(svg.find("&lt;x&gt;") != std::string::npos);
    const auto csv = read_file(files.data);
    CHECK(csv.find("\"a,b\"") != std::string::npos);
    CHECK(csv.find("\"say \"\"hi\"\"\"") != std::string::npos);
}

TEST_CASE("projection validation") {
    Projection2D proj;
    proj.points = {{0, 0}, {1, 1}};
    proj.labels = {"a", "b"};
    proj.tags = {LanguageTag::source, LanguageTag::target};
    proj.pair_links = {{1, 0}};
    CHECK_THROWS_AS(proj.validate(), ContractError);
    proj.pair_links = {{0, 2}};
    CHECK_THROWS_AS(proj.validate(), ContractError);
    proj.pair_links = {{0, 1}};
    CHECK_NOTHROW(proj.validate());
    proj.labels.pop_back();
    CHECK_THROWS_AS(proj.validate(), DimensionError);
    CHECK_THROWS_AS(paired_projection({{0, 0}}, {"a"}, {"b"}), DimensionError);
}

TEST_CASE("renderers are pure functions of their input") {
    TempDir dir;
    const auto proj = sample_projection(5, 8);
    render_projection(proj, dir / "a.svg");
    render_projection(proj, dir / "b.svg");
    CHECK(read_file(dir / "a.svg") == read_file(dir / "b.svg"));
    CHECK(read_file(dir / "a.csv") == read_file(dir / "b.csv"));
    const auto scan = fake_scan(9);
    render_layer_curve(scan, 2, dir / "c.svg");
    render_layer_curve(scan, 2, dir / "d.svg");
    CHECK(read_file(dir / "c.svg") == read_file(dir / "d.svg"));
    CHECK(read_file(dir / "c.csv") == read_file(dir / "d.csv"));
}

TEST_CASE("sidecar path swaps the extension") {
    CHECK(sidecar_path("out/fig.svg") == std::filesystem::path("out/fig.csv"));
    CHECK(sidecar_path("plain") == std::filesystem::path("plain.csv"));
}
