// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tli/model/transformer.hpp"
#include "tli/synth/pairs.hpp"

namespace tli {

struct LayerScanResult {
    std::vector<double> per_layer_mean_sim; // n_layers + 2 entries
    std::vector<double> per_layer_std;      // sample std per layer
    std::size_t peak_layer = 0;             // first index of the maximum mean
    std::size_t pair_count = 0;
};

/// Mean and std of source/target cosine similarity at every hidden-state
/// index. Each word is run through the model once and pooled per layer,
/// which is equivalent to calling embed_word at each layer.
LayerScanResult scan_layers(const MicroTransformer& model, std::span<const WordPair> pairs,
                            ProjectionHook* hook = nullptr);
LayerScanResult scan_layers(const MicroTransformer& model, const WordPairSet& pairs,
                            ProjectionHook* hook = nullptr);

/// Per-pair cosine similarity at `layer`, in input order.
std::vector<double> evaluate_alignment(const MicroTransformer& model,
                                       std::span<const WordPair> pairs, std::size_t layer,
                                       ProjectionHook* hook = nullptr);
std::vector<double> evaluate_alignment(const MicroTransformer& model, const WordPairSet& pairs,
                                       std::size_t layer, ProjectionHook* hook = nullptr);

// ---------------------------------------------------------------- statistics

/// Regularized incomplete beta I_x(a, b) via Lentz continued fraction.
/// Throws NumericError if the fraction does not converge.
double regularized_incomplete_beta(double a, double b, double x);

inline constexpr double kBetaTolerance = 1e-12;
inline constexpr int kBetaMaxIterations = 300;

/// P(|T| >= |t|) for Student t with `df` degrees of freedom.
double student_t_two_tailed_p(double t, double df);
/// P(T >= t).
double student_t_upper_p(double t, double df);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    double df = 0.0;
};

enum class Tail { two_sided, greater };

/// Paired test on d = post - pre with the sample (n - 1) standard deviation.
/// `Tail::greater` tests mean(d) > 0.
TTestResult paired_t_test(std::span<const double> pre, std::span<const double> post,
                          Tail tail = Tail::two_sided);

// ------------------------------------------------------------------- reports

struct PairAlignment {
    std::string source;
    std::string target;
    double sim_pre = 0.0;
    double sim_post = 0.0;
    double delta = 0.0;
};

struct AlignmentReport {
    std::string name;
    std::vector<PairAlignment> per_pair;
    std::size_t n = 0;
    double mean_pre = 0.0;
    double std_pre = 0.0; // sample std
    double mean_post = 0.0;
    double std_post = 0.0;
    double abs_improvement = 0.0;
    double pct_improvement = 0.0; // relative to mean_pre, in percent
    double t_statistic = 0.0;
    double p_value = 1.0;
    double df = 0.0;
    Tail tail = Tail::two_sided;
    std::size_t layer = 0;
};

AlignmentReport build_report(std::span<const double> pre, std::span<const double> post,
                             std::span<const WordPair> pairs, std::size_t layer,
                             std::string name = "trained", Tail tail = Tail::two_sided);

/// Summary table with columns: Evaluation Set, N, Pre-TLI Mean Sim. (Std.Dev.),
/// Post-TLI Mean Sim. (Std.Dev.), Abs. Impr., % Impr., T-statistic, p-value.
std::string render_summary_table(std::span<const AlignmentReport> reports);

/// Per-pair table with columns: Source, Target, Pre-TLI Sim., Post-TLI Sim., Change.
std::string render_pair_table(const AlignmentReport& report);

/// Text document: a key/value header per report, the summary table and the
/// per-pair tables.
std::string render_report_text(std::span<const AlignmentReport> reports);

/// Machine-readable variant of the same content.
std::string render_report_json(std::span<const AlignmentReport> reports);

} // namespace tli
