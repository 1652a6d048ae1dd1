// SPDX-License-Identifier: Apache-2.0
#include "tli/probe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "tli/numcore/error.hpp"
#include "tli/numcore/ops.hpp"
#include "tli/numcore/tensor.hpp"

namespace tli {

namespace {

std::string describe(const WordPair& pair) {
    return "pair ('" + pair.source + "', '" + pair.target + "'): ";
}

// Re-raise with the pair named, keeping the original error type.
template <typename F>
auto naming_pair(const WordPair& pair, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const DegenerateVectorError& e) {
        throw DegenerateVectorError(describe(pair) + e.what());
    } catch (const DimensionError& e) {
        throw DimensionError(describe(pair) + e.what());
    } catch (const ContractError& e) {
        throw ContractError(describe(pair) + e.what());
    } catch (const Error& e) {
        throw Error(describe(pair) + e.what());
    }
}

std::vector<Tensor> embed_all_layers(const MicroTransformer& model, std::string_view word,
                                     ProjectionHook* hook) {
    const TokenizedText tokens = tokenize(word, model.vocab);
    ForwardOptions options;
    options.hook = hook;
    const HiddenStates states = forward_with_hidden_states(model, tokens.ids, tokens.mask, options);
    std::vector<Tensor> out;
    out.reserve(states.per_layer.size());
    for (const auto& s : states.per_layer) {
        out.push_back(l2_normalize(mean_pool_masked(s, states.attention_mask)));
    }
    return out;
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (const double x : v) {
        s += x;
    }
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(v);
    double ss = 0.0;
    for (const double x : v) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace

LayerScanResult scan_layers(const MicroTransformer& model, std::span<const WordPair> pairs,
                            ProjectionHook* hook) {
    if (pairs.empty()) {
        throw ContractError("scan_layers: no pairs");
    }
    NoGradScope no_grad;
    const std::size_t n_states = model.config.n_states();
    std::vector<std::vector<double>> sims(n_states);
    for (const auto& pair : pairs) {
        naming_pair(pair, [&] {
            const auto src = embed_all_layers(model, pair.source, hook);
            const auto tgt = embed_all_layers(model, pair.target, hook);
            for (std::size_t l = 0; l < n_states; ++l) {
                sims[l].push_back(kernels::dot(src[l].data(), tgt[l].data()));
            }
        });
    }
    LayerScanResult result;
    result.pair_count = pairs.size();
    for (std::size_t l = 0; l < n_states; ++l) {
        result.per_layer_mean_sim.push_back(mean_of(sims[l]));
        result.per_layer_std.push_back(sample_std(sims[l]));
        if (result.per_layer_mean_sim[l] > result.per_layer_mean_sim[result.peak_layer]) {
            result.peak_layer = l;
        }
    }
    return result;
}

LayerScanResult scan_layers(const MicroTransformer& model, const WordPairSet& pairs,
                            ProjectionHook* hook) {
    return scan_layers(model, std::span<const WordPair>(pairs.pairs()), hook);
}

std::vector<double> evaluate_alignment(const MicroTransformer& model,
                                       std::span<const WordPair> pairs, std::size_t layer,
                                       ProjectionHook* hook) {
    if (layer > model.config.final_layer()) {
        throw ContractError("evaluate_alignment: layer " + std::to_string(layer) +
                            " outside [0, " + std::to_string(model.config.final_layer()) + "]");
    }
    NoGradScope no_grad;
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& pair : pairs) {
        out.push_back(naming_pair(pair, [&] {
            return cosine_similarity(embed_word(model, pair.source, layer, hook),
                                     embed_word(model, pair.target, layer, hook))
                .item();
        }));
    }
    return out;
}

std::vector<double> evaluate_alignment(const MicroTransformer& model, const WordPairSet& pairs,
                                       std::size_t layer, ProjectionHook* hook) {
    return evaluate_alignment(model, std::span<const WordPair>(pairs.pairs()), layer, hook);
}

// ---------------------------------------------------------------- statistics

namespace {

double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) {
        d = tiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kBetaMaxIterations; ++m) {
        const double md = static_cast<double>(m);
        const double m2 = 2.0 * md;
        double aa = md * (b - md) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        d = std::abs(d) < tiny ? tiny : d;
        c = 1.0 + aa / c;
        c = std::abs(c) < tiny ? tiny : c;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + md) * (qab + md) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        d = std::abs(d) < tiny ? tiny : d;
        c = 1.0 + aa / c;
        c = std::abs(c) < tiny ? tiny : c;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kBetaTolerance) {
            return h;
        }
    }
    throw NumericError("incomplete beta: continued fraction did not converge for a=" +
                       std::to_string(a) + ", b=" + std::to_string(b) +
                       ", x=" + std::to_string(x));
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw ContractError("incomplete beta: shape parameters must be positive");
    }
    if (!(x >= 0.0 && x <= 1.0)) {
        throw ContractError("incomplete beta: x must lie in [0, 1]");
    }
    if (x == 0.0 || x == 1.0) {
        return x;
    }
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, double df) {
    if (!(df > 0.0)) {
        throw ContractError("student t: df must be positive");
    }
    if (std::isnan(t)) {
        throw ContractError("student t: t is NaN");
    }
    if (std::isinf(t)) {
        return 0.0;
    }
    const double x = df / (df + t * t);
    return std::clamp(regularized_incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

double student_t_upper_p(double t, double df) {
    const double half = student_t_two_tailed_p(t, df) / 2.0;
    return t >= 0.0 ? half : 1.0 - half;
}

TTestResult paired_t_test(std::span<const double> pre, std::span<const double> post, Tail tail) {
    if (pre.size() != post.size()) {
        throw DimensionError("paired_t_test: " + std::to_string(pre.size()) + " pre values vs " +
                             std::to_string(post.size()) + " post values");
    }
    const std::size_t n = pre.size();
    if (n < 2) {
        throw ContractError("paired_t_test: need at least 2 pairs, got " + std::to_string(n));
    }
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = post[i] - pre[i];
    }
    const double m = mean_of(d);
    const double sd = sample_std(d);
    TTestResult result;
    result.df = static_cast<double>(n - 1);
    if (sd == 0.0) {
        if (m == 0.0) {
            result.t = 0.0;
            result.p = 1.0;
        } else {
            result.t = m > 0.0 ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
            result.p = (tail == Tail::greater && m < 0.0) ? 1.0 : 0.0;
        }
        return result;
    }
    result.t = m / (sd / std::sqrt(static_cast<double>(n)));
    result.p = tail == Tail::two_sided ? student_t_two_tailed_p(result.t, result.df)
                                       : student_t_upper_p(result.t, result.df);
    return result;
}

// ------------------------------------------------------------------- reports

AlignmentReport build_report(std::span<const double> pre, std::span<const double> post,
                             std::span<const WordPair> pairs, std::size_t layer,
                             std::string name, Tail tail) {
    if (pre.size() != post.size() || pre.size() != pairs.size()) {
        throw DimensionError("build_report: " + std::to_string(pre.size()) + " pre, " +
                             std::to_string(post.size()) + " post, " +
                             std::to_string(pairs.size()) + " pairs");
    }
    AlignmentReport r;
    r.name = std::move(name);
    r.n = pairs.size();
    r.layer = layer;
    r.tail = tail;
    for (std::size_t i = 0; i < r.n; ++i) {
        r.per_pair.push_back(
            PairAlignment{pairs[i].source, pairs[i].target, pre[i], post[i], post[i] - pre[i]});
    }
    r.mean_pre = mean_of(pre);
    r.mean_post = mean_of(post);
    r.std_pre = sample_std(pre);
    r.std_post = sample_std(post);
    r.abs_improvement = r.mean_post - r.mean_pre;
    if (r.mean_pre != 0.0) {
        r.pct_improvement = 100.0 * r.abs_improvement / r.mean_pre;
    } else {
        r.pct_improvement = r.abs_improvement == 0.0 ? 0.0
                                                     : std::numeric_limits<double>::quiet_NaN();
    }
    if (r.n >= 2) {
        const TTestResult t = paired_t_test(pre, post, tail);
        r.t_statistic = t.t;
        r.p_value = t.p;
        r.df = t.df;
    }
    return r;
}

} // namespace tli
