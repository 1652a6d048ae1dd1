// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "tli/numcore/error.hpp"
#include "tli/numcore/rng.hpp"
#include "tli/viz/viz.hpp"

namespace tli {

void Projection2D::validate() const {
    if (labels.size() != points.size() || tags.size() != points.size()) {
        throw DimensionError("projection: " + std::to_string(points.size()) + " points, " +
                             std::to_string(labels.size()) + " labels, " +
                             std::to_string(tags.size()) + " tags");
    }
    for (const auto& [s, t] : pair_links) {
        if (s >= points.size() || t >= points.size()) {
            throw ContractError("projection: link (" + std::to_string(s) + ", " +
                                std::to_string(t) + ") out of range");
        }
        if (tags[s] != LanguageTag::source || tags[t] != LanguageTag::target) {
            throw ContractError("projection: link (" + std::to_string(s) + ", " +
                                std::to_string(t) + ") must join a source to a target");
        }
    }
}

Projection2D paired_projection(std::vector<Point2> points,
                               const std::vector<std::string>& source_labels,
                               const std::vector<std::string>& target_labels) {
    const std::size_t n = source_labels.size();
    if (target_labels.size() != n || points.size() != 2 * n) {
        throw DimensionError("paired_projection: expected " + std::to_string(2 * n) +
                             " points for " + std::to_string(n) + " pairs, got " +
                             std::to_string(points.size()));
    }
    Projection2D proj;
    proj.points = std::move(points);
    proj.labels = source_labels;
    proj.labels.insert(proj.labels.end(), target_labels.begin(), target_labels.end());
    proj.tags.assign(n, LanguageTag::source);
    proj.tags.resize(2 * n, LanguageTag::target);
    for (std::size_t i = 0; i < n; ++i) {
        proj.pair_links.emplace_back(i, n + i);
    }
    return proj;
}

// ----------------------------------------------------------------------- PCA

SymmetricEigen symmetric_eigen(std::vector<double> a, std::size_t n) {
    if (a.size() != n * n) {
        throw DimensionError("symmetric_eigen: expected " + std::to_string(n * n) + " entries");
    }
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        v[i * n + i] = 1.0;
    }
    double scale = 0.0;
    for (const double x : a) {
        scale = std::max(scale, std::abs(x));
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if (off <= 1e-30 * std::max(1.0, scale * scale)) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) {
                    continue;
                }
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p];
                    const double vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return a[x * n + x] > a[y * n + y];
    });
    SymmetricEigen out;
    for (const std::size_t k : order) {
        out.values.push_back(a[k * n + k]);
        std::vector<double> vec(n);
        for (std::size_t i = 0; i < n; ++i) {
            vec[i] = v[i * n + k];
        }
        out.vectors.push_back(std::move(vec));
    }
    return out;
}

PcaResult pca_2d(const Tensor& x) {
    if (x.rank() != 2) {
        throw DimensionError("pca_2d: expected an N x d matrix");
    }
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (n < 3) {
        throw ContractError("pca_2d: need at least 3 points, got " + std::to_string(n));
    }
    if (d < 2) {
        throw ContractError("pca_2d: need at least 2 dimensions, got " + std::to_string(d));
    }
    const auto data = x.data();
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] += data[i * d + j];
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(n);
    }
    std::vector<double> centered(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            centered[i * d + j] = data[i * d + j] - mean[j];
        }
    }
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &centered[i * d];
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = a; b < d; ++b) {
                cov[a * d + b] += row[a] * row[b];
            }
        }
    }
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            cov[a * d + b] /= static_cast<double>(n - 1);
            cov[b * d + a] = cov[a * d + b];
        }
    }
    const SymmetricEigen eig = symmetric_eigen(cov, d);
    if (!(eig.values[0] > 0.0)) {
        throw ContractError("pca_2d: data has zero variance (rank 0)");
    }
    PcaResult result;
    for (std::size_t k = 0; k < 2; ++k) {
        auto comp = eig.vectors[k];
        const double tiny = 1e-12;
        for (const double c : comp) {
            if (std::abs(c) > tiny) {
                if (c < 0.0) {
                    for (double& e : comp) {
                        e = -e;
                    }
                }
                break;
            }
        }
        result.components[k] = std::move(comp);
        result.explained_variance[k] = std::max(eig.values[k], 0.0);
    }
    result.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < 2; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                s += centered[i * d + j] * result.components[k][j];
            }
            result.coords[i][k] = s;
        }
    }
    return result;
}

// --------------------------------------------------------------------- t-SNE

namespace {

std::vector<double> squared_distances(const Tensor& x) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const auto data = x.data();
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = data[i * d + k] - data[j * d + k];
                s += diff * diff;
            }
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    return out;
}

} // namespace

std::vector<double> tsne_affinities(const Tensor& x, double perplexity, double tolerance) {
    if (x.rank() != 2) {
        throw DimensionError("tsne: expected an N x d matrix");
    }
    const std::size_t n = x.rows();
    if (!(perplexity >= 1.0) || !(perplexity < static_cast<double>(n) / 3.0)) {
        throw ContractError("tsne: perplexity " + std::to_string(perplexity) +
                            " must lie in [1, N/3) for N = " + std::to_string(n));
    }
    const auto dist = squared_distances(x);
    const double target = std::log(perplexity);
    std::vector<double> cond(n * n, 0.0);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 200; ++it) {
            // Shift by the smallest distance so the exponentials stay finite.
            double dmin = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    dmin = std::min(dmin, dist[i * n + j]);
                }
            }
            double z = 0.0;
            double weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = j == i ? 0.0 : std::exp(-beta * (dist[i * n + j] - dmin));
                z += row[j];
                weighted += row[j] * (dist[i * n + j] - dmin);
            }
            const double entropy = std::log(z) + beta * weighted / z;
            for (std::size_t j = 0; j < n; ++j) {
                cond[i * n + j] = row[j] / z;
            }
            const double diff = entropy - target;
            if (std::abs(diff) < tolerance) {
                break;
            }
            if (diff > 0.0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
    }
    std::vector<double> p(n * n, 0.0);
    const double denom = 2.0 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
        }
    }
    return p;
}

std::vector<double> tsne_output_affinities(const std::vector<Point2>& y) {
    const std::size_t n = y.size();
    std::vector<double> q(n * n, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            const double dx = y[i][0] - y[j][0];
            const double dy = y[i][1] - y[j][1];
            q[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
            z += q[i * n + j];
        }
    }
    for (double& v : q) {
        v /= z;
    }
    return q;
}

TsneResult tsne_2d(const Tensor& x, const TsneConfig& config) {
    TsneResult result;
    result.p = tsne_affinities(x, config.perplexity, config.entropy_tolerance);
    const std::size_t n = x.rows();
    const auto& p = result.p;

    Rng rng(config.seed);
    std::vector<Point2> y(n);
    for (auto& pt : y) {
        pt = {rng.normal(0.0, 1e-4), rng.normal(0.0, 1e-4)};
    }
    std::vector<Point2> velocity(n, Point2{0.0, 0.0});
    std::vector<Point2> gains(n, Point2{1.0, 1.0});
    std::vector<double> num(n * n);
    std::vector<Point2> grad(n);

    for (std::size_t it = 0; it < config.iterations; ++it) {
        const double exaggeration =
            it < config.exaggeration_iterations ? config.early_exaggeration : 1.0;
        const double momentum =
            it < config.momentum_switch ? config.initial_momentum : config.final_momentum;
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y[i][0] - y[j][0];
                const double dy = y[i][1] - y[j][1];
                const double w = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = w;
                num[j * n + i] = w;
                z += 2.0 * w;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            Point2 g{0.0, 0.0};
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    continue;
                }
                const double w = num[i * n + j];
                const double coeff = (exaggeration * p[i * n + j] - w / z) * w;
                g[0] += coeff * (y[i][0] - y[j][0]);
                g[1] += coeff * (y[i][1] - y[j][1]);
            }
            grad[i] = {4.0 * g[0], 4.0 * g[1]};
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < 2; ++k) {
                // Delta-bar-delta step sizes as in the reference implementation.
                const bool same_sign = (grad[i][k] > 0.0) == (velocity[i][k] > 0.0);
                gains[i][k] = same_sign ? std::max(gains[i][k] * 0.8, 0.01) : gains[i][k] + 0.2;
                velocity[i][k] =
                    momentum * velocity[i][k] - config.learning_rate * gains[i][k] * grad[i][k];
                y[i][k] += velocity[i][k];
            }
        }
        Point2 centre{0.0, 0.0};
        for (const auto& pt : y) {
            centre[0] += pt[0];
            centre[1] += pt[1];
        }
        for (auto& pt : y) {
            pt[0] -= centre[0] / static_cast<double>(n);
            pt[1] -= centre[1] / static_cast<double>(n);
        }
    }
    result.coords = y;
    result.q = tsne_output_affinities(y);
    double kl = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) {
        if (p[i] > 0.0) {
            kl += p[i] * std::log(p[i] / std::max(result.q[i], 1e-300));
        }
    }
    result.kl_divergence = kl;
    return result;
}

} // namespace tli
