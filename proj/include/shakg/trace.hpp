#pragma once

// Attention aggregation and the human-readable per-step trace log.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shakg/kg.hpp"
#include "shakg/tensor.hpp"
#include "shakg/trainer.hpp"

namespace shakg {

inline const std::vector<std::string>& aggregation_methods() {
    static const std::vector<std::string> methods{
        "max",        "mean",       "sum",        "top10_mean", "top10_sum",
        "top25_mean", "top25_sum",  "top50_mean", "top50_sum"};
    return methods;
}

// Reduce each channel's d attention values by the method, then softmax
// across channels. alpha is d x channels (one column per channel).
inline std::vector<double> aggregate_attention(const Tensor& alpha, const std::string& method) {
    const auto& known = aggregation_methods();
    if (std::find(known.begin(), known.end(), method) == known.end())
        throw std::invalid_argument("aggregate_attention: unknown method '" + method + "'");

    const std::size_t d = alpha.rows, channels = alpha.cols;
    std::vector<double> reduced(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        std::vector<double> column(d);
        for (std::size_t i = 0; i < d; ++i) column[i] = alpha.at(i, c);
        if (method == "max") {
            reduced[c] = *std::max_element(column.begin(), column.end());
        } else if (method == "mean" || method == "sum") {
            double s = 0.0;
            for (double v : column) s += v;
            reduced[c] = method == "mean" ? s / static_cast<double>(d) : s;
        } else {
            std::size_t k = method.find("top10") == 0 ? 10 : method.find("top25") == 0 ? 25 : 50;
            k = std::min(k, d);
            // k == d reduces to the plain sum/mean; skip the reorder so the
            // result is bit-identical to those methods
            if (k < d)
                std::partial_sort(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(k),
                                  column.end(), std::greater<>());
            double s = 0.0;
            for (std::size_t i = 0; i < k; ++i) s += column[i];
            reduced[c] = method.size() >= 4 && method.compare(method.size() - 4, 4, "mean") == 0
                             ? s / static_cast<double>(k)
                             : s;
        }
    }
    double mx = *std::max_element(reduced.begin(), reduced.end());
    double z = 0.0;
    for (double& v : reduced) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : reduced) v /= z;
    return reduced;
}

struct AttentionBlock {
    std::vector<std::string> channel_names;
    std::vector<std::pair<std::string, std::vector<double>>> rows;  // method -> values
};

struct StepTraceRecord {
    int step = 0;
    std::string desc, inv, feed, last_action;
    std::vector<Triple> new_triples;  // sorted
    AttentionBlock att_high;          // empty rows when the level is absent
    AttentionBlock att_low;
    std::string action;
    long reward = 0;
    long score = 0;
    // optional: per sub-graph, the top nodes by mean incoming attention
    std::vector<std::pair<std::string, std::vector<std::string>>> top_nodes;
};

inline AttentionBlock build_attention_block(const Tensor& alpha,
                                            std::vector<std::string> channel_names,
                                            const std::vector<std::string>& methods) {
    AttentionBlock block;
    block.channel_names = std::move(channel_names);
    for (const auto& m : methods) block.rows.emplace_back(m, aggregate_attention(alpha, m));
    return block;
}

// Top nodes of one sub-graph ranked by mean incoming attention (column mean
// of the neighbor-attention matrix).
inline std::vector<std::string> top_attention_nodes(const Tensor& alpha,
                                                    const std::vector<std::string>& nodes,
                                                    std::size_t count = 3) {
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t j = 0; j < alpha.cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < alpha.rows; ++i) s += alpha.at(i, j);
        ranked.emplace_back(-s / static_cast<double>(alpha.rows), j);
    }
    std::stable_sort(ranked.begin(), ranked.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(count, ranked.size()); ++i)
        out.push_back(nodes[ranked[i].second]);
    return out;
}

namespace detail {

inline std::string three_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

inline std::string value_list(const std::vector<double>& values) {
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += "'" + three_decimals(values[i]) + "'";
    }
    return out + "]";
}

inline void render_block(std::ostringstream& out, const char* tag, const AttentionBlock& block) {
    out << "----- " << tag << ": ";
    for (std::size_t i = 0; i < block.channel_names.size(); ++i) {
        if (i) out << ", ";
        out << block.channel_names[i];
    }
    out << '\n';
    for (const auto& [method, values] : block.rows) {
        std::string key = std::string(tag) + "_" + method;
        key.resize(15, ' ');
        out << key << ": " << value_list(values) << '\n';
    }
}

}  // namespace detail

// One step block of the trace log.
inline std::string render_trace(const StepTraceRecord& rec) {
    std::ostringstream out;
    out << "----- ===== Step " << rec.step << " ===== -----\n";
    out << "===== 1. Textual obs: \n";
    out << "o_desc: " << rec.desc << '\n';
    out << "o_inv: " << rec.inv << '\n';
    out << "o_feed: " << rec.feed << '\n';
    out << "a_past: " << rec.last_action << '\n';
    out << "===== 2. Newly extracted triplets\n[";
    for (std::size_t i = 0; i < rec.new_triples.size(); ++i) {
        if (i) out << ", ";
        const auto& t = rec.new_triples[i];
        out << "('" << t.subject << "', '" << t.relation << "', '" << t.object << "')";
    }
    out << "]\n";
    out << "===== 3. Attention values: \n";
    if (!rec.att_high.rows.empty()) detail::render_block(out, "attH", rec.att_high);
    if (!rec.att_low.rows.empty()) detail::render_block(out, "attL", rec.att_low);
    out << "===== 4. Chosen action and reward\n";
    out << "Action: " << rec.action << '\n';
    out << "Reward: " << rec.reward << "|Score: " << rec.score << '\n';
    if (!rec.top_nodes.empty()) {
        out << "===== 5. Top attended nodes\n";
        for (const auto& [part, nodes] : rec.top_nodes) {
            out << part << ": [";
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (i) out << ", ";
                out << "'" << nodes[i] << "'";
            }
            out << "]\n";
        }
    }
    return out.str();
}

inline std::string step_delimiter(int step) {
    return "----- ===== Step " + std::to_string(step) + " ===== -----";
}

// One greedy episode rendered block by block. The same routine backs the CLI
// trace command and the golden-file tests.
inline void write_episode_trace(const ShaKgModel& model, MiniEnv& env, std::ostream& out,
                                const std::vector<std::string>& methods, bool with_nodes) {
    run_greedy_episode(model, env, [&](const EpisodeStep& step) {
        StepTraceRecord rec;
        rec.step = step.index;
        rec.desc = step.obs.desc;
        rec.inv = step.obs.inv;
        rec.feed = step.obs.feed;
        rec.last_action = step.obs.last_action;
        rec.new_triples.assign(step.new_triples.begin(), step.new_triples.end());
        if (step.fw.enc.alpha_high)
            rec.att_high = build_attention_block(*step.fw.enc.alpha_high,
                                                 {"o_desc", "o_inv", "o_feed", "a_past"}, methods);
        if (step.fw.enc.alpha_low)
            rec.att_low =
                build_attention_block(*step.fw.enc.alpha_low, step.fw.enc.part_names, methods);
        rec.action = step.fw.dec.decision.action;
        rec.reward = std::llround(step.reward);
        rec.score = step.score;
        if (with_nodes)
            for (std::size_t i = 0; i < step.fw.enc.sub_graphs.size(); ++i) {
                const auto& g = step.fw.enc.sub_graphs[i];
                if (g.alpha)
                    rec.top_nodes.emplace_back(step.fw.enc.part_names[i],
                                               top_attention_nodes(*g.alpha, g.nodes));
            }
        out << render_trace(rec) << '\n';
    });
}

}  // namespace shakg
