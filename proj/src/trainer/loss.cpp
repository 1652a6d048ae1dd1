// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "tli/numcore/error.hpp"
#include "tli/numcore/ops.hpp"
#include "tli/numcore/text.hpp"
#include "tli/trainer/trainer.hpp"

namespace tli {

namespace {

void require_unit_rows(const Tensor& m, const char* what) {
    const std::size_t d = m.cols();
    const auto values = m.data();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double n = kernels::norm2(values.subspan(i * d, d));
        if (std::abs(n - 1.0) > kUnitNormTolerance) {
            throw ContractError(std::string("contrastive loss: ") + what + " row " +
                                std::to_string(i) + " has norm " + format_double(n) +
                                ", expected unit norm");
        }
    }
}

} // namespace

ContrastiveLossResult in_batch_contrastive_loss(const EmbeddingBatch& batch, double margin) {
    const Tensor& anchors = batch.anchors;
    const Tensor& positives = batch.positives;
    if (anchors.rank() != 2 || anchors.shape() != positives.shape()) {
        throw DimensionError("contrastive loss: anchors " + shape_to_string(anchors.shape()) +
                             " and positives " + shape_to_string(positives.shape()) +
                             " must be equal-shape matrices");
    }
    if (margin < 0.0) {
        throw ContractError("contrastive loss: margin must be non-negative");
    }
    require_unit_rows(anchors, "anchor");
    require_unit_rows(positives, "positive");

    const std::size_t b = anchors.rows();
    // Rows are unit norm, so dot products are the cosine similarities.
    const Tensor sims = linear(anchors, positives);
    const auto s = sims.data();

    ContrastiveLossResult result;
    result.negatives.resize(b);
    result.row_losses.resize(b, 0.0);
    std::vector<bool> active(b, false);
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        result.negatives[i] = i;
        if (b == 1) {
            continue;
        }
        std::size_t best = i == 0 ? 1 : 0;
        for (std::size_t j = best + 1; j < b; ++j) {
            if (j != i && s[i * b + j] > s[i * b + best]) {
                best = j;
            }
        }
        result.negatives[i] = best;
        const double hinge = margin + s[i * b + best] - s[i * b + i];
        if (hinge > 0.0) {
            active[i] = true;
            result.row_losses[i] = hinge;
            total += hinge;
        }
    }
    Tensor loss = Tensor::scalar(total / static_cast<double>(b));
    const auto negatives = result.negatives;
    record_op({sims}, loss, [sims, loss, active, negatives, b]() mutable {
        const double g = loss.grad()[0] / static_cast<double>(b);
        auto gs = sims.grad_buffer();
        for (std::size_t i = 0; i < b; ++i) {
            if (!active[i]) {
                continue;
            }
            gs[i * b + negatives[i]] += g;
            gs[i * b + i] -= g;
        }
    });
    result.loss = loss;
    return result;
}

} // namespace tli
