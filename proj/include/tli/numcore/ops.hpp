// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tli/numcore/rng.hpp"
#include "tli/numcore/tensor.hpp"

namespace tli {

/// Norm threshold below which a vector is treated as degenerate.
inline constexpr double kDegenerateNorm = 1e-12;

// Every op below is recorded on the active Tape when an input requires grad.

/// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// x [t x in], weight [out x in] -> x * weight^T [t x out]. Projection
/// weights are stored output-major, so this is the layer application.
Tensor linear(const Tensor& x, const Tensor& weight);

Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);

/// Row-wise RMS normalization with a learned per-column gain.
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps);

/// Gathers rows of `table` [V x d] for `ids`; result [t x d].
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);

/// Multi-head causal scaled-dot-product attention over q, k, v [t x d].
/// Position i attends to positions j <= i only, and only to keys whose
/// `key_mask` entry is nonzero when a mask is given. A row with no visible
/// key yields zeros.
Tensor causal_self_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                             std::size_t n_heads, std::span<const int> key_mask = {});

/// Mean over rows of -log softmax(logits[row])[target[row]].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

/// Arithmetic mean of the rows of `states` [t x d] whose mask entry is 1.
Tensor mean_pool_masked(const Tensor& states, std::span<const int> mask);

/// v / |v|_2. Throws DegenerateVectorError when |v| <= kDegenerateNorm.
Tensor l2_normalize(const Tensor& v);

/// Scalar cosine of the angle between a and b.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

/// Stacks B equal-length vectors into a [B x d] matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);

/// Inverted dropout. p == 0 returns x unchanged.
Tensor dropout(const Tensor& x, double p, Rng& rng);

// Untracked kernels shared by ops and callers that need raw products.
namespace kernels {

/// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
/// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
/// c[m x n] += a[k x m]^T * b[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

} // namespace kernels

} // namespace tli
