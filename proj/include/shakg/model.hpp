#pragma once

// Full policy assembly: text/score/graph encoders feeding the stacked
// attention, the action decoder, and the value head.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "shakg/decoder.hpp"
#include "shakg/encoders.hpp"
#include "shakg/env.hpp"
#include "shakg/kg.hpp"
#include "shakg/params.hpp"
#include "shakg/sha.hpp"
#include "shakg/vocab.hpp"

namespace shakg {

struct ModelConfig {
    std::size_t d_high = 100;
    std::size_t d_low = 50;
    std::size_t d_emb = 50;
    std::size_t d_node = 25;
    std::size_t d_kg = 50;
    std::size_t d_score = 16;
    std::size_t d_dec = 100;
    std::size_t critic_hidden = 64;
    ModelVariant variant = ModelVariant::Full;
    PartitionStrategy strategy = PartitionStrategy::Full;
};

struct EncodeResult {
    TensorPtr v_t;
    TensorPtr alpha_high;  // null for the no-high-level variant
    TensorPtr alpha_low;   // null for the no-low-level variant
    std::vector<GatResult> sub_graphs;  // per-part node attention, for traces
    std::vector<std::string> part_names;
};

struct ForwardPass {
    EncodeResult enc;
    DecodeResult dec;
    TensorPtr value;  // 1x1
    double value_scalar = 0.0;
};

// Memoizes text-GRU and GAT encodings for one fixed parameter snapshot.
// Observation strings and sub-graph contents repeat heavily across steps, so
// reusing their encodings removes most of the forward cost. Entries become
// stale the moment parameters change; callers clear the cache after every
// optimizer step. When recording gradients, cached nodes are shared
// subgraphs, which is only sound if the whole batch is backpropagated in a
// single backward() call.
struct EncodingCache {
    std::unordered_map<std::string, TensorPtr> text;
    std::unordered_map<std::string, GatResult> graphs;
    void clear() {
        text.clear();
        graphs.clear();
    }
};

class ShaKgModel {
public:
    ShaKgModel(std::shared_ptr<const Vocabulary> vocab, std::shared_ptr<const TemplateSet> templates,
               ModelConfig cfg, std::uint64_t seed)
        : vocab_(std::move(vocab)),
          templates_(std::move(templates)),
          cfg_(cfg),
          store_(std::make_unique<ParameterStore>(seed)) {
        build();
    }

    const ModelConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return *vocab_; }
    const TemplateSet& templates() const { return *templates_; }
    ParameterStore& store() { return *store_; }
    const ParameterStore& store() const { return *store_; }
    const GatParams& sub_gat(std::size_t i) const { return gat_subs_.at(i); }
    bool has_high_level() const { return cfg_.variant != ModelVariant::NoHighLevel; }
    bool has_low_level() const { return cfg_.variant != ModelVariant::NoLowLevel; }

    EncodeResult encode_state(const ObservationBundle& obs, const KnowledgeGraph& kg,
                              EncodingCache* cache = nullptr) const {
        const bool group = cfg_.variant != ModelVariant::NoGroupAttn;

        std::vector<TensorPtr> text_cols{
            encode_text('d', obs.desc, gru_desc_, cache),
            encode_text('i', obs.inv, gru_inv_, cache),
            encode_text('f', obs.feed, gru_feed_, cache),
            encode_text('a', obs.last_action, gru_last_, cache)};
        auto v_text = concat_cols(text_cols);
        auto v_score = score_tensor(obs.score);

        EncodeResult out;
        TensorPtr q_high;
        if (has_high_level()) {
            KgView full{"full", {kg.edges().begin(), kg.edges().end()}};
            auto v_kg_full = encode_part('F', kg, full, gat_full_, cache).vec;
            q_high = build_query(v_kg_full, v_score, sha_);
        } else {
            q_high = build_query(mean_cols(v_text), v_score, sha_);
        }

        TensorPtr q_low_pre = q_high;
        if (has_high_level()) {
            auto hi = high_attend(v_text, q_high, sha_, group);
            out.alpha_high = hi.alpha;
            q_low_pre = hi.query;
        }

        if (has_low_level()) {
            auto parts = partition(kg, cfg_.strategy);
            std::vector<TensorPtr> sub_cols;
            for (std::size_t i = 0; i < parts.parts.size(); ++i) {
                auto res = encode_part(static_cast<char>('0' + i), kg, parts.parts[i],
                                       gat_subs_[i], cache);
                sub_cols.push_back(res.vec);
                out.sub_graphs.push_back(std::move(res));
                out.part_names.push_back(parts.parts[i].name);
            }
            auto lo = low_attend(concat_cols(sub_cols), q_low_pre, sha_, group);
            out.alpha_low = lo.alpha_low;
            out.v_t = lo.v_t;
        } else {
            out.v_t = matmul(sha_.W_bridge, q_low_pre);
        }
        return out;
    }

    TensorPtr value_of(const TensorPtr& v_t) const {
        auto h = tanh(add(matmul(critic_w1_, v_t), critic_b1_));
        return add(matmul(critic_w2_, h), critic_b2_);
    }

    // One full policy evaluation. `forced` replays a recorded decision for
    // loss recomputation.
    ForwardPass forward(const ObservationBundle& obs, const KnowledgeGraph& kg,
                        const std::vector<int>& candidates, DecodeMode mode = DecodeMode::Greedy,
                        std::mt19937_64* rng = nullptr, const ActionDecision* forced = nullptr,
                        EncodingCache* cache = nullptr) const {
        ForwardPass fw;
        fw.enc = encode_state(obs, kg, cache);
        fw.dec = decode_action(fw.enc.v_t, *templates_, candidates, decoder_, *vocab_, mode, rng,
                               forced);
        fw.value = value_of(fw.enc.v_t);
        fw.value_scalar = fw.value->data[0];
        return fw;
    }

private:
    TensorPtr encode_text(char tag, const std::string& text, const GruParams& gru,
                          EncodingCache* cache) const {
        auto tokens = tokenize(text, *vocab_);
        if (!cache) return encode_component(tokens, gru);
        std::string key;
        key.reserve(tokens.size() + 1);
        key.push_back(tag);
        for (int t : tokens) key.push_back(static_cast<char>(t + 1));
        auto it = cache->text.find(key);
        if (it != cache->text.end()) return it->second;
        auto encoded = encode_component(tokens, gru);
        cache->text.emplace(std::move(key), encoded);
        return encoded;
    }

    GatResult encode_part(char tag, const KnowledgeGraph& kg, const KgView& view,
                          const GatParams& gat, EncodingCache* cache) const {
        auto adj = to_adjacency(kg, view);
        if (!cache) return encode_graph(adj, node_emb_, *vocab_, gat);
        std::string key;
        key.push_back(tag);
        for (const auto& node : adj.nodes) {
            key += node;
            key.push_back('\x1f');
        }
        key.append(adj.matrix.begin(), adj.matrix.end());
        auto it = cache->graphs.find(key);
        if (it != cache->graphs.end()) {
            ++*gat.calls;
            return it->second;
        }
        auto res = encode_graph(adj, node_emb_, *vocab_, gat);
        cache->graphs.emplace(std::move(key), res);
        return res;
    }

    void build() {
        const auto v = static_cast<std::size_t>(vocab_->size());
        ParameterStore& ps = *store_;
        gru_desc_ = GruParams::create(ps, "enc.desc", v, cfg_.d_emb, cfg_.d_high);
        gru_inv_ = GruParams::create(ps, "enc.inv", v, cfg_.d_emb, cfg_.d_high);
        gru_feed_ = GruParams::create(ps, "enc.feed", v, cfg_.d_emb, cfg_.d_high);
        gru_last_ = GruParams::create(ps, "enc.last", v, cfg_.d_emb, cfg_.d_high);
        node_emb_ = ps.add("gat.node_emb", v, cfg_.d_node);
        // Every graph channel exists in every variant; ablations simply never
        // invoke the ones they drop (observable through the call counters).
        gat_full_ = GatParams::create(ps, "gat.full", cfg_.d_node, cfg_.d_kg);
        for (int i = 0; i < 4; ++i)
            gat_subs_.push_back(
                GatParams::create(ps, "gat.sub" + std::to_string(i), cfg_.d_node, cfg_.d_low));
        const std::size_t d_query_in = has_high_level() ? cfg_.d_kg : cfg_.d_high;
        sha_ = ShaParams::create(ps, "sha", cfg_.d_high, cfg_.d_low, d_query_in, cfg_.d_score,
                                 has_high_level(), has_low_level());
        decoder_ = DecoderParams::create(ps, "dec",
                                         static_cast<std::size_t>(templates_->size()), v,
                                         cfg_.d_low, cfg_.d_dec, cfg_.d_emb);
        critic_w1_ = ps.add("critic.w1", cfg_.critic_hidden, cfg_.d_low);
        critic_b1_ = ps.add_zeros("critic.b1", cfg_.critic_hidden, 1);
        critic_w2_ = ps.add("critic.w2", 1, cfg_.critic_hidden);
        critic_b2_ = ps.add_zeros("critic.b2", 1, 1);
    }

    std::shared_ptr<const Vocabulary> vocab_;
    std::shared_ptr<const TemplateSet> templates_;
    ModelConfig cfg_;
    std::unique_ptr<ParameterStore> store_;

    GruParams gru_desc_, gru_inv_, gru_feed_, gru_last_;
    TensorPtr node_emb_;
    GatParams gat_full_;
    std::vector<GatParams> gat_subs_;
    ShaParams sha_;
    DecoderParams decoder_;
    TensorPtr critic_w1_, critic_b1_, critic_w2_, critic_b2_;
};

}  // namespace shakg
