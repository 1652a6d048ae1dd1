// SPDX-License-Identifier: Apache-2.0
#include "tli/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tli/numcore/error.hpp"

namespace tli {

namespace kernels {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) {
                continue;
            }
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            c[i * n + j] += acc;
        }
    }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = a[p * m + i];
            if (av == 0.0) {
                continue;
            }
            double* crow = c.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

} // namespace kernels

namespace {

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got " +
                             shape_to_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                             " vs " + shape_to_string(b.shape()));
    }
}

void require_vector(const Tensor& t, const char* op) {
    if (t.rank() != 1) {
        throw DimensionError(std::string(op) + ": expected a vector, got " +
                             shape_to_string(t.shape()));
    }
}

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    const std::size_t n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) +
                             " x " + shape_to_string(b.shape()));
    }
    auto out_data = zeros(m * n);
    kernels::gemm_nn(m, k, n, a.data(), b.data(), out_data);
    Tensor out({m, n}, std::move(out_data));
    record_op({a, b}, out, [a, b, out, m, k, n]() mutable {
        const auto g = out.grad();
        if (a.requires_grad()) {
            kernels::gemm_nt(m, n, k, g, b.data(), a.grad_buffer());
        }
        if (b.requires_grad()) {
            kernels::gemm_tn(k, m, n, a.data(), g, b.grad_buffer());
        }
    });
    return out;
}

Tensor linear(const Tensor& x, const Tensor& weight) {
    require_matrix(x, "linear");
    require_matrix(weight, "linear");
    const std::size_t t = x.rows();
    const std::size_t in = x.cols();
    const std::size_t out_dim = weight.rows();
    if (weight.cols() != in) {
        throw DimensionError("linear: input " + shape_to_string(x.shape()) +
                             " does not fit weight " + shape_to_string(weight.shape()));
    }
    auto out_data = zeros(t * out_dim);
    kernels::gemm_nt(t, in, out_dim, x.data(), weight.data(), out_data);
    Tensor out({t, out_dim}, std::move(out_data));
    record_op({x, weight}, out, [x, weight, out, t, in, out_dim]() mutable {
        const auto g = out.grad();
        if (x.requires_grad()) {
            kernels::gemm_nn(t, out_dim, in, g, weight.data(), x.grad_buffer());
        }
        if (weight.requires_grad()) {
            kernels::gemm_tn(out_dim, t, in, g, x.data(), weight.grad_buffer());
        }
    });
    return out;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t r = a.rows();
    const std::size_t c = a.cols();
    auto out_data = zeros(r * c);
    const auto src = a.data();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            out_data[j * r + i] = src[i * c + j];
        }
    }
    Tensor out({c, r}, std::move(out_data));
    record_op({a}, out, [a, out, r, c]() mutable {
        const auto g = out.grad();
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                ga[i * c + j] += g[j * r + i];
            }
        }
    });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto out_data = a.to_vector();
    const auto bd = b.data();
    for (std::size_t i = 0; i < out_data.size(); ++i) {
        out_data[i] += bd[i];
    }
    Tensor out(a.shape(), std::move(out_data));
    record_op({a, b}, out, [a, b, out]() mutable {
        accumulate_grad(a, out.grad());
        accumulate_grad(b, out.grad());
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto out_data = a.to_vector();
    const auto bd = b.data();
    for (std::size_t i = 0; i < out_data.size(); ++i) {
        out_data[i] -= bd[i];
    }
    Tensor out(a.shape(), std::move(out_data));
    record_op({a, b}, out, [a, b, out]() mutable {
        accumulate_grad(a, out.grad());
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            const auto g = out.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] -= g[i];
            }
        }
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto out_data = a.to_vector();
    const auto bd = b.data();
    for (std::size_t i = 0; i < out_data.size(); ++i) {
        out_data[i] *= bd[i];
    }
    Tensor out(a.shape(), std::move(out_data));
    record_op({a, b}, out, [a, b, out]() mutable {
        const auto g = out.grad();
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            const auto bd = b.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * bd[i];
            }
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            const auto ad = a.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] += g[i] * ad[i];
            }
        }
    });
    return out;
}

Tensor scale(const Tensor& a, double factor) {
    auto out_data = a.to_vector();
    for (double& v : out_data) {
        v *= factor;
    }
    Tensor out(a.shape(), std::move(out_data));
    record_op({a}, out, [a, out, factor]() mutable {
        auto ga = a.grad_buffer();
        const auto g = out.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += factor * g[i];
        }
    });
    return out;
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (const double v : a.data()) {
        acc += v;
    }
    Tensor out = Tensor::scalar(acc);
    record_op({a}, out, [a, out]() mutable {
        const double g = out.grad()[0];
        for (double& v : a.grad_buffer()) {
            v += g;
        }
    });
    return out;
}

Tensor mean(const Tensor& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    Tensor out = Tensor::scalar(kernels::dot(a.data(), b.data()));
    record_op({a, b}, out, [a, b, out]() mutable {
        const double g = out.grad()[0];
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            const auto bd = b.data();
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] += g * bd[i];
            }
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            const auto ad = a.data();
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] += g * ad[i];
            }
        }
    });
    return out;
}

Tensor relu(const Tensor& a) {
    auto out_data = a.to_vector();
    for (double& v : out_data) {
        v = v > 0.0 ? v : 0.0;
    }
    Tensor out(a.shape(), std::move(out_data));
    record_op({a}, out, [a, out]() mutable {
        auto ga = a.grad_buffer();
        const auto g = out.grad();
        const auto ad = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (ad[i] > 0.0) {
                ga[i] += g[i];
            }
        }
    });
    return out;
}

Tensor silu(const Tensor& a) {
    auto out_data = a.to_vector();
    for (double& v : out_data) {
        v = v / (1.0 + std::exp(-v));
    }
    Tensor out(a.shape(), std::move(out_data));
    record_op({a}, out, [a, out]() mutable {
        auto ga = a.grad_buffer();
        const auto g = out.grad();
        const auto ad = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-ad[i]));
            ga[i] += g[i] * s * (1.0 + ad[i] * (1.0 - s));
        }
    });
    return out;
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
    require_matrix(x, "rms_norm");
    require_vector(gain, "rms_norm");
    const std::size_t t = x.rows();
    const std::size_t d = x.cols();
    if (gain.size() != d) {
        throw DimensionError("rms_norm: gain " + shape_to_string(gain.shape()) +
                             " does not fit input " + shape_to_string(x.shape()));
    }
    std::vector<double> inv_rms(t);
    auto out_data = zeros(t * d);
    const auto xd = x.data();
    const auto gd = gain.data();
    for (std::size_t i = 0; i < t; ++i) {
        const auto row = xd.subspan(i * d, d);
        const double ms = kernels::dot(row, row) / static_cast<double>(d);
        inv_rms[i] = 1.0 / std::sqrt(ms + eps);
        for (std::size_t j = 0; j < d; ++j) {
            out_data[i * d + j] = row[j] * inv_rms[i] * gd[j];
        }
    }
    Tensor out({t, d}, std::move(out_data));
    record_op({x, gain}, out, [x, gain, out, inv_rms, t, d]() mutable {
        const auto g = out.grad();
        const auto xd = x.data();
        const auto gd = gain.data();
        if (gain.requires_grad()) {
            auto gg = gain.grad_buffer();
            for (std::size_t i = 0; i < t; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    gg[j] += g[i * d + j] * xd[i * d + j] * inv_rms[i];
                }
            }
        }
        if (x.requires_grad()) {
            auto gx = x.grad_buffer();
            for (std::size_t i = 0; i < t; ++i) {
                // xhat = x * r; dxhat = g * gain; dx = r * (dxhat - xhat * mean(dxhat * xhat))
                double proj = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    proj += g[i * d + j] * gd[j] * xd[i * d + j] * inv_rms[i];
                }
                proj /= static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    const double xhat = xd[i * d + j] * inv_rms[i];
                    gx[i * d + j] += inv_rms[i] * (g[i * d + j] * gd[j] - xhat * proj);
                }
            }
        }
    });
    return out;
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
    require_matrix(table, "embedding");
    const std::size_t vocab = table.rows();
    const std::size_t d = table.cols();
    if (ids.empty()) {
        throw DimensionError("embedding: empty id sequence");
    }
    auto out_data = zeros(ids.size() * d);
    const auto td = table.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= vocab) {
            throw DimensionError("embedding: id " + std::to_string(ids[i]) +
                                 " outside table of " + std::to_string(vocab) + " rows");
        }
        std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                    out_data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    Tensor out({ids.size(), d}, std::move(out_data));
    std::vector<std::size_t> id_copy(ids.begin(), ids.end());
    record_op({table}, out, [table, out, id_copy, d]() mutable {
        auto gt = table.grad_buffer();
        const auto g = out.grad();
        for (std::size_t i = 0; i < id_copy.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                gt[id_copy[i] * d + j] += g[i * d + j];
            }
        }
    });
    return out;
}

Tensor causal_self_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                             std::size_t n_heads, std::span<const int> key_mask) {
    require_matrix(q, "attention");
    require_same_shape(q, k, "attention");
    require_same_shape(q, v, "attention");
    const std::size_t t = q.rows();
    const std::size_t d = q.cols();
    if (n_heads == 0 || d % n_heads != 0) {
        throw DimensionError("attention: width " + std::to_string(d) +
                             " not divisible by head count " + std::to_string(n_heads));
    }
    if (!key_mask.empty() && key_mask.size() != t) {
        throw DimensionError("attention: mask length " + std::to_string(key_mask.size()) +
                             " vs " + std::to_string(t) + " positions");
    }
    const auto visible = [&key_mask](std::size_t j) {
        return key_mask.empty() || key_mask[j] != 0;
    };
    const std::size_t hd = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    const auto qd = q.data();
    const auto kd = k.data();
    const auto vd = v.data();

    // probs[h][i][j], zero above the diagonal.
    std::vector<double> probs(n_heads * t * t, 0.0);
    auto out_data = zeros(t * d);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t off = h * hd;
        for (std::size_t i = 0; i < t; ++i) {
            double* p = probs.data() + (h * t + i) * t;
            double max_score = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j <= i; ++j) {
                if (!visible(j)) {
                    continue;
                }
                double s = 0.0;
                for (std::size_t c = 0; c < hd; ++c) {
                    s += qd[i * d + off + c] * kd[j * d + off + c];
                }
                p[j] = s * inv_sqrt;
                max_score = std::max(max_score, p[j]);
            }
            if (max_score == -std::numeric_limits<double>::infinity()) {
                continue;
            }
            double z = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                p[j] = visible(j) ? std::exp(p[j] - max_score) : 0.0;
                z += p[j];
            }
            for (std::size_t j = 0; j <= i; ++j) {
                p[j] /= z;
                for (std::size_t c = 0; c < hd; ++c) {
                    out_data[i * d + off + c] += p[j] * vd[j * d + off + c];
                }
            }
        }
    }
    Tensor out({t, d}, std::move(out_data));
    record_op({q, k, v}, out, [q, k, v, out, probs, t, d, n_heads, hd, inv_sqrt]() mutable {
        const auto g = out.grad();
        const auto qd = q.data();
        const auto kd = k.data();
        const auto vd = v.data();
        std::vector<double> gq(t * d, 0.0);
        std::vector<double> gk(t * d, 0.0);
        std::vector<double> gv(t * d, 0.0);
        std::vector<double> dp(t);
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t off = h * hd;
            for (std::size_t i = 0; i < t; ++i) {
                const double* p = probs.data() + (h * t + i) * t;
                double weighted = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < hd; ++c) {
                        s += g[i * d + off + c] * vd[j * d + off + c];
                        gv[j * d + off + c] += p[j] * g[i * d + off + c];
                    }
                    dp[j] = s;
                    weighted += p[j] * s;
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    const double ds = p[j] * (dp[j] - weighted) * inv_sqrt;
                    if (ds == 0.0) {
                        continue;
                    }
                    for (std::size_t c = 0; c < hd; ++c) {
                        gq[i * d + off + c] += ds * kd[j * d + off + c];
                        gk[j * d + off + c] += ds * qd[i * d + off + c];
                    }
                }
            }
        }
        accumulate_grad(q, gq);
        accumulate_grad(k, gk);
        accumulate_grad(v, gv);
    });
    return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
    require_matrix(logits, "cross_entropy");
    const std::size_t t = logits.rows();
    const std::size_t n = logits.cols();
    if (targets.size() != t) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(t) + " rows");
    }
    const auto ld = logits.data();
    std::vector<double> probs(t * n);
    double total = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        if (targets[i] >= n) {
            throw DimensionError("cross_entropy: target " + std::to_string(targets[i]) +
                                 " outside " + std::to_string(n) + " classes");
        }
        const auto row = ld.subspan(i * n, n);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            probs[i * n + j] = std::exp(row[j] - mx);
            z += probs[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            probs[i * n + j] /= z;
        }
        total += -(row[targets[i]] - mx - std::log(z));
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(t));
    std::vector<std::size_t> target_copy(targets.begin(), targets.end());
    record_op({logits}, out, [logits, out, probs, target_copy, t, n]() mutable {
        const double g = out.grad()[0] / static_cast<double>(t);
        auto gl = logits.grad_buffer();
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                gl[i * n + j] += g * probs[i * n + j];
            }
            gl[i * n + target_copy[i]] -= g;
        }
    });
    return out;
}

Tensor mean_pool_masked(const Tensor& states, std::span<const int> mask) {
    require_matrix(states, "mean_pool_masked");
    const std::size_t t = states.rows();
    const std::size_t d = states.cols();
    if (mask.size() != t) {
        throw DimensionError("mean_pool_masked: mask length " + std::to_string(mask.size()) +
                             " vs " + std::to_string(t) + " rows");
    }
    std::size_t count = 0;
    for (const int m : mask) {
        count += m != 0 ? 1 : 0;
    }
    if (count == 0) {
        throw ContractError("mean_pool_masked: empty pool, mask selects no rows");
    }
    const double inv = 1.0 / static_cast<double>(count);
    auto out_data = zeros(d);
    const auto sd = states.data();
    for (std::size_t i = 0; i < t; ++i) {
        if (mask[i] == 0) {
            continue;
        }
        for (std::size_t j = 0; j < d; ++j) {
            out_data[j] += sd[i * d + j];
        }
    }
    for (double& v : out_data) {
        v *= inv;
    }
    Tensor out({d}, std::move(out_data));
    std::vector<int> mask_copy(mask.begin(), mask.end());
    record_op({states}, out, [states, out, mask_copy, inv, t, d]() mutable {
        auto gs = states.grad_buffer();
        const auto g = out.grad();
        for (std::size_t i = 0; i < t; ++i) {
            if (mask_copy[i] == 0) {
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) {
                gs[i * d + j] += g[j] * inv;
            }
        }
    });
    return out;
}

Tensor l2_normalize(const Tensor& v) {
    require_vector(v, "l2_normalize");
    const double n = kernels::norm2(v.data());
    if (!(n > kDegenerateNorm)) {
        throw DegenerateVectorError("l2_normalize: vector norm " + std::to_string(n) +
                                    " is below " + std::to_string(kDegenerateNorm));
    }
    auto out_data = v.to_vector();
    for (double& x : out_data) {
        x /= n;
    }
    Tensor out(v.shape(), std::move(out_data));
    record_op({v}, out, [v, out, n]() mutable {
        const auto g = out.grad();
        const auto y = out.data();
        const double proj = kernels::dot(y, g);
        auto gv = v.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            gv[i] += (g[i] - y[i] * proj) / n;
        }
    });
    return out;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    require_vector(a, "cosine_similarity");
    require_same_shape(a, b, "cosine_similarity");
    const double na = kernels::norm2(a.data());
    const double nb = kernels::norm2(b.data());
    if (!(na > kDegenerateNorm) || !(nb > kDegenerateNorm)) {
        throw DegenerateVectorError("cosine_similarity: degenerate input (norms " +
                                    std::to_string(na) + ", " + std::to_string(nb) + ")");
    }
    const double c = kernels::dot(a.data(), b.data()) / (na * nb);
    Tensor out = Tensor::scalar(c);
    record_op({a, b}, out, [a, b, out, na, nb, c]() mutable {
        const double g = out.grad()[0];
        const auto ad = a.data();
        const auto bd = b.data();
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] += g * (bd[i] / (na * nb) - c * ad[i] / (na * na));
            }
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] += g * (ad[i] / (na * nb) - c * bd[i] / (nb * nb));
            }
        }
    });
    return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) {
        throw DimensionError("stack_rows: no rows");
    }
    const std::size_t d = rows.front().size();
    std::vector<double> out_data;
    out_data.reserve(rows.size() * d);
    for (const auto& r : rows) {
        require_vector(r, "stack_rows");
        if (r.size() != d) {
            throw DimensionError("stack_rows: row of length " + std::to_string(r.size()) +
                                 " among rows of length " + std::to_string(d));
        }
        out_data.insert(out_data.end(), r.data().begin(), r.data().end());
    }
    Tensor out({rows.size(), d}, std::move(out_data));
    record_op(rows, out, [rows, out, d]() mutable {
        const auto g = out.grad();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            accumulate_grad(rows[i], g.subspan(i * d, d));
        }
    });
    return out;
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ContractError("dropout: probability must be in [0, 1), got " + std::to_string(p));
    }
    if (p == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.size());
    for (double& m : mask) {
        m = rng.uniform() < p ? 0.0 : keep_scale;
    }
    return mul(x, Tensor(x.shape(), std::move(mask)));
}

} // namespace tli
