#pragma once

// Stacked hierarchical attention: a KG+score query attends over the textual
// components, the refined query attends over the sub-graph vectors.

#include <stdexcept>
#include <string>
#include <vector>

#include "shakg/params.hpp"
#include "shakg/tensor.hpp"

namespace shakg {

enum class ModelVariant { Full, NoGroupAttn, NoHighLevel, NoLowLevel };

inline ModelVariant parse_variant(const std::string& name) {
    if (name == "full") return ModelVariant::Full;
    if (name == "no-group-attn") return ModelVariant::NoGroupAttn;
    if (name == "no-high-level") return ModelVariant::NoHighLevel;
    if (name == "no-low-level") return ModelVariant::NoLowLevel;
    throw std::invalid_argument("encode_state: unknown variant '" + name + "'");
}

inline std::string variant_name(ModelVariant v) {
    switch (v) {
        case ModelVariant::Full: return "full";
        case ModelVariant::NoGroupAttn: return "no-group-attn";
        case ModelVariant::NoHighLevel: return "no-high-level";
        case ModelVariant::NoLowLevel: return "no-low-level";
    }
    return "?";
}

struct ShaParams {
    TensorPtr W_init, b_init;                // d_high x (d_kg + d_score), d_high x 1
    TensorPtr W_I_high, W_Q_high, W_A_high;  // d_high x d_high
    TensorPtr b_Q_high, b_A_high;            // d_high x 1
    TensorPtr W_bridge;                      // d_low x d_high
    TensorPtr W_I_low, W_Q_low, W_A_low;     // d_low x d_low
    TensorPtr b_Q_low, b_A_low;              // d_low x 1
    std::size_t d_high = 0, d_low = 0;

    // d_query_in is the width of the non-score part of the initial query
    // input (the full-KG vector normally; the v_text column mean for the
    // no-high-level variant). The attention blocks are created only for the
    // levels a variant uses.
    static ShaParams create(ParameterStore& ps, const std::string& prefix, std::size_t d_high,
                            std::size_t d_low, std::size_t d_query_in, std::size_t d_score,
                            bool high_attention = true, bool low_attention = true) {
        ShaParams p;
        p.d_high = d_high;
        p.d_low = d_low;
        p.W_init = ps.add(prefix + ".W_init", d_high, d_query_in + d_score);
        p.b_init = ps.add_zeros(prefix + ".b_init", d_high, 1);
        if (high_attention) {
            p.W_I_high = ps.add(prefix + ".W_I_high", d_high, d_high);
            p.W_Q_high = ps.add(prefix + ".W_Q_high", d_high, d_high);
            p.W_A_high = ps.add(prefix + ".W_A_high", d_high, d_high);
            p.b_Q_high = ps.add_zeros(prefix + ".b_Q_high", d_high, 1);
            p.b_A_high = ps.add_zeros(prefix + ".b_A_high", d_high, 1);
        }
        p.W_bridge = ps.add(prefix + ".W_bridge", d_low, d_high);
        if (low_attention) {
            p.W_I_low = ps.add(prefix + ".W_I_low", d_low, d_low);
            p.W_Q_low = ps.add(prefix + ".W_Q_low", d_low, d_low);
            p.W_A_low = ps.add(prefix + ".W_A_low", d_low, d_low);
            p.b_Q_low = ps.add_zeros(prefix + ".b_Q_low", d_low, 1);
            p.b_A_low = ps.add_zeros(prefix + ".b_A_low", d_low, 1);
        }
        return p;
    }
};

// Column-stack c vectors of equal height into a d x c matrix.
inline TensorPtr concat_cols(const std::vector<TensorPtr>& cols) {
    if (cols.empty()) throw std::invalid_argument("concat_cols: no columns");
    TensorPtr stacked = transpose(cols[0]);
    for (std::size_t i = 1; i < cols.size(); ++i)
        stacked = concat_rows(stacked, transpose(cols[i]));
    return transpose(stacked);
}

inline TensorPtr build_query(const TensorPtr& v_kg_full, const TensorPtr& v_score,
                             const ShaParams& p) {
    if (v_kg_full->cols != 1 || v_score->cols != 1 ||
        v_kg_full->rows + v_score->rows != p.W_init->cols)
        throw std::invalid_argument("build_query: width mismatch " + shape_str(*v_kg_full) +
                                    " + " + shape_str(*v_score) + " vs " + shape_str(*p.W_init));
    return add(matmul(p.W_init, concat_rows(v_kg_full, v_score)), p.b_init);
}

struct AttendResult {
    TensorPtr alpha;  // d x c attention values (row-stochastic over c)
    TensorPtr query;  // refined query, d x 1
};

namespace detail {

// Shared attention block of both levels. With group_attention off, the
// per-position logits collapse to one value per channel (column mean) before
// the softmax, broadcast back to every position.
inline AttendResult attend(const TensorPtr& values, const TensorPtr& query, const TensorPtr& W_I,
                           const TensorPtr& W_Q, const TensorPtr& b_Q, const TensorPtr& W_A,
                           const TensorPtr& b_A, bool group_attention) {
    auto h = tanh(add_col(matmul(W_I, values), add(matmul(W_Q, query), b_Q)));
    auto logits = add_col(matmul(W_A, h), b_A);
    TensorPtr alpha;
    if (group_attention) {
        alpha = softmax_rows(logits);
    } else {
        auto per_channel = softmax_rows(transpose(mean_cols(transpose(logits))));  // 1 x c
        alpha = matmul(tensor(values->rows, 1, 1.0), per_channel);
    }
    auto refined = add(query, sum_cols(mul(alpha, values)));
    return {alpha, refined};
}

}  // namespace detail

// Eqs. over the textual components: returns (alpha_high, pre-bridge query).
inline AttendResult high_attend(const TensorPtr& v_text, const TensorPtr& q_high,
                                const ShaParams& p, bool group_attention) {
    if (v_text->rows != p.d_high || q_high->rows != p.d_high || q_high->cols != 1)
        throw std::invalid_argument("high_attend: shape mismatch " + shape_str(*v_text) + " / " +
                                    shape_str(*q_high));
    return detail::attend(v_text, q_high, p.W_I_high, p.W_Q_high, p.b_Q_high, p.W_A_high,
                          p.b_A_high, group_attention);
}

struct LowAttendResult {
    TensorPtr q_low;      // bridged query, d_low x 1
    TensorPtr alpha_low;  // d_low x m
    TensorPtr v_t;        // state representation, d_low x 1
};

inline LowAttendResult low_attend(const TensorPtr& v_kg_subs, const TensorPtr& q_low_pre,
                                  const ShaParams& p, bool group_attention) {
    if (v_kg_subs->rows != p.d_low || q_low_pre->rows != p.d_high || q_low_pre->cols != 1)
        throw std::invalid_argument("low_attend: shape mismatch " + shape_str(*v_kg_subs) + " / " +
                                    shape_str(*q_low_pre));
    auto q_low = matmul(p.W_bridge, q_low_pre);
    auto att = detail::attend(v_kg_subs, q_low, p.W_I_low, p.W_Q_low, p.b_Q_low, p.W_A_low,
                              p.b_A_low, group_attention);
    return {q_low, att.alpha, att.query};
}

}  // namespace shakg
