// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tli/numcore/tensor.hpp"
#include "tli/probe/probe.hpp"

namespace tli {

using Point2 = std::array<double, 2>;

enum class LanguageTag { source, target };

struct Projection2D {
    std::vector<Point2> points;
    std::vector<std::string> labels;
    std::vector<LanguageTag> tags;
    /// (source index, target index) into points.
    std::vector<std::pair<std::size_t, std::size_t>> pair_links;

    /// Sizes agree and every link joins a source point to a target point.
    void validate() const;
};

/// Rows [0, n) are the source words and rows [n, 2n) their targets; link i
/// joins point i to point n + i.
Projection2D paired_projection(std::vector<Point2> points,
                               const std::vector<std::string>& source_labels,
                               const std::vector<std::string>& target_labels);

// ----------------------------------------------------------------------- PCA

struct SymmetricEigen {
    std::vector<double> values;               // descending
    std::vector<std::vector<double>> vectors; // vectors[k] pairs with values[k]
};

/// Cyclic Jacobi rotations on a dense symmetric matrix (row-major, n x n).
SymmetricEigen symmetric_eigen(std::vector<double> matrix, std::size_t n);

struct PcaResult {
    std::vector<Point2> coords;
    std::array<std::vector<double>, 2> components;
    std::array<double, 2> explained_variance{}; // covariance eigenvalues, n - 1 denominator
};

/// Projection of mean-centered rows of `x` [N x d] onto the two leading
/// principal axes. Each axis is oriented so its first nonzero loading is
/// positive. Needs N >= 3 and d >= 2; throws if the data has no variance.
PcaResult pca_2d(const Tensor& x);

// --------------------------------------------------------------------- t-SNE

struct TsneConfig {
    double perplexity = 10.0;
    std::size_t iterations = 500;
    double learning_rate = 100.0;
    double early_exaggeration = 12.0;
    std::size_t exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;
    double entropy_tolerance = 1e-5;
    std::uint64_t seed = 42;
};

struct TsneResult {
    std::vector<Point2> coords;
    std::vector<double> p; // symmetric input affinities, N x N
    std::vector<double> q; // output affinities at the final iterate, N x N
    double kl_divergence = 0.0;
};

/// Symmetrized joint affinities from Gaussian conditionals whose bandwidths
/// match `perplexity` (entropy in nats within `tolerance`).
std::vector<double> tsne_affinities(const Tensor& x, double perplexity, double tolerance = 1e-5);

/// Student-t joint affinities of a 2D layout.
std::vector<double> tsne_output_affinities(const std::vector<Point2>& y);

/// Exact t-SNE. Requires 1 <= perplexity < N / 3.
TsneResult tsne_2d(const Tensor& x, const TsneConfig& config = {});

// ----------------------------------------------------------------- rendering

struct RenderedFiles {
    std::filesystem::path image;
    std::filesystem::path data;
};

/// Sidecar path next to an image: same stem, ".csv".
std::filesystem::path sidecar_path(const std::filesystem::path& image);

/// Line chart of mean similarity per layer with one dashed vertical marker at
/// `peak_marker`. The y axis spans [min mean - 0.05, 1.0]. The sidecar has
/// columns layer,mean_sim,std_sim.
RenderedFiles render_layer_curve(const LayerScanResult& result, std::size_t peak_marker,
                                 const std::filesystem::path& path,
                                 const std::string& title = "Mean pair similarity per layer");

/// Scatter of source (blue) and target (red) points with a grey segment per
/// pair link and a text label per point. The sidecar has columns
/// index,label,language,x,y,px,py where px/py are the plotted positions, as
/// printed in the image.
RenderedFiles render_projection(const Projection2D& projection, const std::filesystem::path& path,
                                const std::string& title = "Pair projection");

} // namespace tli
