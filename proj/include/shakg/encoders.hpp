#pragma once

// Input encoders: per-component text GRUs, binary score encoding, and the
// per-channel graph attention encoders.

#include <atomic>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "shakg/kg.hpp"
#include "shakg/params.hpp"
#include "shakg/tensor.hpp"
#include "shakg/vocab.hpp"

namespace shakg {

struct GruCell {
    TensorPtr Wz, Wr, Wh;  // d x d_in
    TensorPtr Uz, Ur, Uh;  // d x d
    TensorPtr bz, br, bh;  // d x 1
    std::size_t hidden = 0;
    std::size_t input = 0;

    static GruCell create(ParameterStore& ps, const std::string& prefix, std::size_t d,
                          std::size_t d_in) {
        GruCell c;
        c.hidden = d;
        c.input = d_in;
        c.Wz = ps.add(prefix + ".Wz", d, d_in);
        c.Wr = ps.add(prefix + ".Wr", d, d_in);
        c.Wh = ps.add(prefix + ".Wh", d, d_in);
        c.Uz = ps.add(prefix + ".Uz", d, d);
        c.Ur = ps.add(prefix + ".Ur", d, d);
        c.Uh = ps.add(prefix + ".Uh", d, d);
        c.bz = ps.add_zeros(prefix + ".bz", d, 1);
        c.br = ps.add_zeros(prefix + ".br", d, 1);
        c.bh = ps.add_zeros(prefix + ".bh", d, 1);
        return c;
    }

    TensorPtr step(const TensorPtr& x, const TensorPtr& h) const {
        auto z = sigmoid(add(add(matmul(Wz, x), matmul(Uz, h)), bz));
        auto r = sigmoid(add(add(matmul(Wr, x), matmul(Ur, h)), br));
        auto cand = tanh(add(add(matmul(Wh, x), matmul(Uh, mul(r, h))), bh));
        auto keep = mul(sub(tensor(hidden, 1, 1.0), z), h);
        return add(keep, mul(z, cand));
    }
};

struct GruParams {
    TensorPtr emb;  // |V| x d_emb
    GruCell cell;

    static GruParams create(ParameterStore& ps, const std::string& prefix, std::size_t vocab_size,
                            std::size_t d_emb, std::size_t d_hidden) {
        GruParams g;
        g.emb = ps.add(prefix + ".emb", vocab_size, d_emb);
        g.cell = GruCell::create(ps, prefix, d_hidden, d_emb);
        return g;
    }
};

inline TensorPtr embed_token(const TensorPtr& table, int id) {
    return transpose(rows_at(table, {static_cast<std::size_t>(id)}));
}

// Final hidden state of a GRU run over the embedded tokens; empty input maps
// to the zero vector.
inline TensorPtr encode_component(const std::vector<int>& tokens, const GruParams& p) {
    TensorPtr h = tensor(p.cell.hidden, 1);
    for (int tok : tokens) h = p.cell.step(embed_token(p.emb, tok), h);
    return h;
}

// Raw score as 16 bits: magnitude (clamped to 15 bits, little-endian) plus a
// sign bit at position 15.
inline std::vector<double> encode_score(int score) {
    std::vector<double> bits(16, 0.0);
    long mag = std::labs(static_cast<long>(score));
    if (mag > 32767) mag = 32767;
    for (int b = 0; b < 15; ++b) bits[b] = static_cast<double>((mag >> b) & 1);
    if (score < 0) bits[15] = 1.0;
    return bits;
}

inline TensorPtr score_tensor(int score) { return column(encode_score(score)); }

struct GatParams {
    TensorPtr W;     // d_node x d_node projection
    TensorPtr a;     // 2*d_node x 1 attention vector
    TensorPtr Wout;  // d_out x d_node
    TensorPtr bout;  // d_out x 1
    std::size_t d_node = 0;
    std::size_t d_out = 0;
    std::shared_ptr<std::atomic<long>> calls = std::make_shared<std::atomic<long>>(0);

    static GatParams create(ParameterStore& ps, const std::string& prefix, std::size_t d_node,
                            std::size_t d_out) {
        GatParams g;
        g.d_node = d_node;
        g.d_out = d_out;
        g.W = ps.add(prefix + ".W", d_node, d_node);
        g.a = ps.add(prefix + ".a", 2 * d_node, 1, d_node);
        g.Wout = ps.add(prefix + ".Wout", d_out, d_node);
        g.bout = ps.add_zeros(prefix + ".bout", d_out, 1);
        return g;
    }
};

struct GatResult {
    TensorPtr vec;                   // d_out x 1 graph representation
    TensorPtr alpha;                 // n x n neighbor attention (empty graph: null)
    std::vector<std::string> nodes;  // row/col order of alpha
};

// Single-layer, single-head GAT with LeakyReLU(0.2) scores, tanh aggregation
// and mean pooling, followed by the output linear. Node features are the
// shared embedding of the node name's first word.
inline GatResult encode_graph(const Adjacency& adj, const TensorPtr& node_emb,
                              const Vocabulary& vocab, const GatParams& p) {
    ++*p.calls;
    const std::size_t n = adj.nodes.size();
    if (n == 0) return {tensor(p.d_out, 1), nullptr, {}};

    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto words = split_words(adj.nodes[i]);
        ids[i] = static_cast<std::size_t>(words.empty() ? Vocabulary::kUnk : vocab.id(words[0]));
    }
    auto H = rows_at(node_emb, ids);  // n x d_node
    auto HW = matmul(H, p.W);

    std::vector<std::size_t> lo(p.d_node), hi(p.d_node);
    for (std::size_t i = 0; i < p.d_node; ++i) {
        lo[i] = i;
        hi[i] = p.d_node + i;
    }
    auto s_self = matmul(HW, rows_at(p.a, lo));  // n x 1
    auto s_neigh = matmul(HW, rows_at(p.a, hi));

    auto scores = add(matmul(s_self, tensor(1, n, 1.0)),
                      matmul(tensor(n, 1, 1.0), transpose(s_neigh)));
    scores = leaky_relu(scores, 0.2);
    auto mask = tensor(n, n, 0.0);
    for (std::size_t i = 0; i < n * n; ++i)
        if (!adj.matrix[i]) mask->data[i] = -1e30;
    auto alpha = softmax_rows(add(scores, mask));

    auto aggregated = tanh(matmul(alpha, HW));          // n x d_node
    auto pooled = mean_cols(transpose(aggregated));     // d_node x 1
    auto vec = add(matmul(p.Wout, pooled), p.bout);
    return {vec, alpha, adj.nodes};
}

}  // namespace shakg
