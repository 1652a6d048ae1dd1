// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "tli/numcore/text.hpp"
#include "tli/probe/probe.hpp"

namespace tli {

namespace {

std::string printf_string(const char* fmt, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, value);
    return buf;
}

std::string signed_fixed(double value, int digits) {
    if (!std::isfinite(value)) {
        return "n/a";
    }
    const std::string body = format_fixed(value, digits);
    return value >= 0.0 ? "+" + body : body;
}

std::string format_t(double t) {
    if (std::isinf(t)) {
        return t > 0 ? "inf" : "-inf";
    }
    return format_fixed(t, 4);
}

std::string format_p(double p) {
    if (p == 0.0) {
        return "0";
    }
    return p < 1e-4 ? printf_string("%.2e", p) : format_fixed(p, 4);
}

std::string display_name(const std::string& name) {
    if (name == "trained") {
        return "Trained Pairs";
    }
    if (name == "control") {
        return "Control (Unseen) Pairs";
    }
    return name;
}

std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& row : rows) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    auto line = [&](const std::vector<std::string>& cells) {
        std::string out = "|";
        for (std::size_t c = 0; c < cells.size(); ++c) {
            out += ' ' + cells[c] + std::string(width[c] - cells[c].size(), ' ') + " |";
        }
        return out + '\n';
    };
    std::string out = line(header);
    std::string rule = "|";
    for (const std::size_t w : width) {
        rule += std::string(w + 2, '-') + '|';
    }
    out += rule + '\n';
    for (const auto& row : rows) {
        out += line(row);
    }
    return out;
}

nlohmann::ordered_json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

} // namespace

std::string render_summary_table(std::span<const AlignmentReport> reports) {
    const std::vector<std::string> header{"Evaluation Set",
                                          "N",
                                          "Pre-TLI Mean Sim. (Std.Dev.)",
                                          "Post-TLI Mean Sim. (Std.Dev.)",
                                          "Abs. Impr.",
                                          "% Impr.",
                                          "T-statistic",
                                          "p-value"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : reports) {
        rows.push_back({display_name(r.name), std::to_string(r.n),
                        format_fixed(r.mean_pre, 4) + " (" + format_fixed(r.std_pre, 4) + ")",
                        format_fixed(r.mean_post, 4) + " (" + format_fixed(r.std_post, 4) + ")",
                        signed_fixed(r.abs_improvement, 4),
                        std::isfinite(r.pct_improvement) ? signed_fixed(r.pct_improvement, 2) + "%"
                                                         : "n/a",
                        format_t(r.t_statistic), format_p(r.p_value)});
    }
    return render_table(header, rows);
}

std::string render_pair_table(const AlignmentReport& report) {
    const std::vector<std::string> header{"Source", "Target", "Pre-TLI Sim.", "Post-TLI Sim.",
                                          "Change"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : report.per_pair) {
        rows.push_back({p.source, p.target, format_fixed(p.sim_pre, 3),
                        format_fixed(p.sim_post, 3), signed_fixed(p.delta, 3)});
    }
    return render_table(header, rows);
}

std::string render_report_text(std::span<const AlignmentReport> reports) {
    std::string out = "# Alignment report\n\n";
    for (const auto& r : reports) {
        out += "[" + r.name + "]\n";
        out += "n = " + std::to_string(r.n) + '\n';
        out += "layer = " + std::to_string(r.layer) + '\n';
        out += "mean_pre = " + format_double(r.mean_pre) + '\n';
        out += "std_pre = " + format_double(r.std_pre) + '\n';
        out += "mean_post = " + format_double(r.mean_post) + '\n';
        out += "std_post = " + format_double(r.std_post) + '\n';
        out += "abs_improvement = " + format_double(r.abs_improvement) + '\n';
        out += "pct_improvement = " + format_double(r.pct_improvement) + '\n';
        out += "t_statistic = " + format_double(r.t_statistic) + '\n';
        out += "df = " + format_double(r.df) + '\n';
        out += "p_value = " + format_double(r.p_value) + '\n';
        out += std::string("tail = ") + (r.tail == Tail::two_sided ? "two-sided" : "greater") +
               "\n\n";
    }
    out += "## Summary\n\n" + render_summary_table(reports);
    for (const auto& r : reports) {
        out += "\n## Per-pair similarities: " + r.name + "\n\n" + render_pair_table(r);
    }
    return out;
}

std::string render_report_json(std::span<const AlignmentReport> reports) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    for (const auto& r : reports) {
        nlohmann::ordered_json j;
        j["n"] = r.n;
        j["layer"] = r.layer;
        j["mean_pre"] = r.mean_pre;
        j["std_pre"] = r.std_pre;
        j["mean_post"] = r.mean_post;
        j["std_post"] = r.std_post;
        j["abs_improvement"] = r.abs_improvement;
        j["pct_improvement"] = number_or_null(r.pct_improvement);
        j["t_statistic"] = number_or_null(r.t_statistic);
        j["df"] = r.df;
        j["p_value"] = r.p_value;
        j["tail"] = r.tail == Tail::two_sided ? "two-sided" : "greater";
        nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
        for (const auto& p : r.per_pair) {
            pairs.push_back({{"source", p.source},
                             {"target", p.target},
                             {"sim_pre", p.sim_pre},
                             {"sim_post", p.sim_post},
                             {"delta", p.delta}});
        }
        j["per_pair"] = std::move(pairs);
        doc[r.name] = std::move(j);
    }
    return doc.dump(2) + '\n';
}

} // namespace tli
