#pragma once

// Template-then-objects action decoding. Object logits span the vocabulary;
// the graph mask restricts the sampled distribution to KG-word candidates.

#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shakg/encoders.hpp"
#include "shakg/params.hpp"
#include "shakg/tensor.hpp"
#include "shakg/vocab.hpp"

namespace shakg {

constexpr const char* kSlotMarker = "OBJ";
constexpr int kMaxSlots = 2;

struct Template {
    std::string text;
    std::vector<std::string> tokens;
    int slots = 0;
};

struct TemplateSet {
    std::vector<Template> items;

    static TemplateSet from_lines(const std::vector<std::string>& lines) {
        TemplateSet set;
        for (const auto& raw : lines) {
            std::istringstream ss(raw);
            Template t;
            std::string tok;
            while (ss >> tok) {
                if (tok == kSlotMarker) ++t.slots;
                t.tokens.push_back(tok);
            }
            if (t.tokens.empty()) continue;
            if (t.slots > kMaxSlots)
                throw std::invalid_argument("TemplateSet: more than 2 slots in '" + raw + "'");
            t.text = raw;
            for (const auto& existing : set.items)
                if (existing.tokens == t.tokens)
                    throw std::invalid_argument("TemplateSet: duplicate template '" + raw + "'");
            set.items.push_back(std::move(t));
        }
        return set;
    }

    // One template per line, OBJ marks slots.
    static TemplateSet load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("TemplateSet: cannot open " + path);
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
            if (!line.empty() && line[0] != '#') lines.push_back(line);
        }
        return from_lines(lines);
    }

    int size() const { return static_cast<int>(items.size()); }
};

inline std::string render_action(const Template& tmpl, const std::vector<std::string>& objects) {
    if (static_cast<int>(objects.size()) != tmpl.slots)
        throw std::invalid_argument("render_action: " + std::to_string(objects.size()) +
                                    " objects for " + std::to_string(tmpl.slots) + " slots in '" +
                                    tmpl.text + "'");
    std::string out;
    std::size_t next_obj = 0;
    for (const auto& tok : tmpl.tokens) {
        if (!out.empty()) out.push_back(' ');
        out += (tok == kSlotMarker) ? objects[next_obj++] : tok;
    }
    return out;
}

// Match a rendered action back against the template set; slots capture one
// word each. First match wins.
inline std::optional<std::pair<int, std::vector<std::string>>> parse_action(
    const TemplateSet& templates, const std::string& action) {
    auto words = split_words(action);
    for (int ti = 0; ti < templates.size(); ++ti) {
        const auto& t = templates.items[ti];
        if (t.tokens.size() != words.size()) continue;
        std::vector<std::string> objs;
        bool ok = true;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (t.tokens[i] == kSlotMarker)
                objs.push_back(words[i]);
            else if (t.tokens[i] != words[i]) {
                ok = false;
                break;
            }
        }
        if (ok) return std::make_pair(ti, objs);
    }
    return std::nullopt;
}

struct DecoderParams {
    GruCell tmpl_cell;
    GruCell obj_cell;
    TensorPtr tmpl_start;   // d_emb x 1 learned start input
    TensorPtr tmpl_lift;    // d_dec x d_state
    TensorPtr obj_lift;     // d_dec x d_state
    TensorPtr tmpl_head_w;  // |T| x d_dec
    TensorPtr tmpl_head_b;
    TensorPtr tmpl_emb;  // |T| x d_emb
    TensorPtr obj_emb;   // |V| x d_emb
    TensorPtr obj_head_w;  // |V| x d_dec
    TensorPtr obj_head_b;

    static DecoderParams create(ParameterStore& ps, const std::string& prefix,
                                std::size_t n_templates, std::size_t vocab_size,
                                std::size_t d_state, std::size_t d_dec, std::size_t d_emb) {
        DecoderParams p;
        p.tmpl_lift = ps.add(prefix + ".tmpl.lift", d_dec, d_state);
        p.tmpl_start = ps.add(prefix + ".tmpl.start", d_emb, 1, d_emb);
        p.tmpl_cell = GruCell::create(ps, prefix + ".tmpl", d_dec, d_emb);
        p.tmpl_head_w = ps.add(prefix + ".tmpl.head_w", n_templates, d_dec);
        p.tmpl_head_b = ps.add_zeros(prefix + ".tmpl.head_b", n_templates, 1);
        p.tmpl_emb = ps.add(prefix + ".obj.tmpl_emb", n_templates, d_emb, d_emb);
        p.obj_lift = ps.add(prefix + ".obj.lift", d_dec, d_state);
        p.obj_cell = GruCell::create(ps, prefix + ".obj", d_dec, d_emb);
        p.obj_emb = ps.add(prefix + ".obj.tok_emb", vocab_size, d_emb, d_emb);
        p.obj_head_w = ps.add(prefix + ".obj.head_w", vocab_size, d_dec);
        p.obj_head_b = ps.add_zeros(prefix + ".obj.head_b", vocab_size, 1);
        return p;
    }
};

enum class DecodeMode { Sample, Greedy };

struct ActionDecision {
    int template_index = -1;
    std::vector<int> object_ids;  // vocab ids, one per slot
    std::string action;
    double log_prob = 0.0;
    std::vector<double> template_dist;            // |T|
    std::vector<std::vector<double>> object_dists;  // per slot, |V|; masked entries exactly 0
};

struct DecodeResult {
    ActionDecision decision;
    TensorPtr log_prob;                     // 1x1
    TensorPtr entropy;                      // 1x1, sum of p*log p over all factors
    TensorPtr template_probs;               // 1 x |T|
    std::vector<TensorPtr> slot_masked;     // 1 x n_cand, candidate order
    std::vector<TensorPtr> slot_unmasked;   // 1 x |V|
};

namespace detail {

inline int pick(const TensorPtr& probs_row, DecodeMode mode, std::mt19937_64* rng) {
    const auto& p = probs_row->data;
    if (mode == DecodeMode::Greedy) {
        int best = 0;
        for (std::size_t i = 1; i < p.size(); ++i)
            if (p[i] > p[best]) best = static_cast<int>(i);
        return best;
    }
    if (!rng) throw std::invalid_argument("decode: sampling requires an rng");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(*rng), acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

// log of one entry of a probability row, kept differentiable via a one-hot
// constant selector.
inline TensorPtr log_prob_at(const TensorPtr& probs_row, int idx) {
    auto onehot = tensor(probs_row->cols, 1, 0.0);
    onehot->data[static_cast<std::size_t>(idx)] = 1.0;
    return log(matmul(probs_row, onehot));
}

inline TensorPtr plogp(const TensorPtr& probs_row) { return sum_all(mul(probs_row, log(probs_row))); }

}  // namespace detail

// Decode a template and its objects. `forced` replays a stored decision
// (teacher forcing) for loss recomputation; otherwise mode/rng choose.
inline DecodeResult decode_action(const TensorPtr& v_t, const TemplateSet& templates,
                                  const std::vector<int>& candidates, const DecoderParams& p,
                                  const Vocabulary& vocab, DecodeMode mode = DecodeMode::Greedy,
                                  std::mt19937_64* rng = nullptr,
                                  const ActionDecision* forced = nullptr) {
    DecodeResult res;

    auto h_t = tanh(matmul(p.tmpl_lift, v_t));
    auto h1 = p.tmpl_cell.step(p.tmpl_start, h_t);
    auto tmpl_logits = add(matmul(p.tmpl_head_w, h1), p.tmpl_head_b);
    res.template_probs = softmax_rows(transpose(tmpl_logits));

    int tmpl_idx = forced ? forced->template_index
                          : detail::pick(res.template_probs, mode, rng);
    if (tmpl_idx < 0 || tmpl_idx >= templates.size())
        throw std::out_of_range("decode: template index " + std::to_string(tmpl_idx));
    const Template& tmpl = templates.items[static_cast<std::size_t>(tmpl_idx)];

    res.log_prob = detail::log_prob_at(res.template_probs, tmpl_idx);
    res.entropy = detail::plogp(res.template_probs);
    res.decision.template_index = tmpl_idx;
    res.decision.template_dist = res.template_probs->data;

    std::vector<std::string> obj_words;
    if (forced && static_cast<int>(forced->object_ids.size()) != tmpl.slots)
        throw std::invalid_argument("decode: replayed decision has " +
                                    std::to_string(forced->object_ids.size()) + " objects for " +
                                    std::to_string(tmpl.slots) + " slots");
    if (tmpl.slots > 0) {
        if (candidates.empty()) throw std::runtime_error("decode: empty candidate set");
        std::vector<std::size_t> cand_rows(candidates.begin(), candidates.end());
        auto h = tanh(matmul(p.obj_lift, v_t));
        TensorPtr x = transpose(rows_at(p.tmpl_emb, {static_cast<std::size_t>(tmpl_idx)}));
        for (int slot = 0; slot < tmpl.slots; ++slot) {
            h = p.obj_cell.step(x, h);
            auto logits = add(matmul(p.obj_head_w, h), p.obj_head_b);  // |V| x 1
            auto masked = softmax_rows(transpose(rows_at(logits, cand_rows)));
            auto unmasked = softmax_rows(transpose(logits));
            res.slot_masked.push_back(masked);
            res.slot_unmasked.push_back(unmasked);

            int cand_idx;
            if (forced) {
                int want = forced->object_ids[static_cast<std::size_t>(slot)];
                auto it = std::find(candidates.begin(), candidates.end(), want);
                if (it == candidates.end())
                    throw std::runtime_error("decode: chosen object '" + vocab.token(want) +
                                             "' is masked");
                cand_idx = static_cast<int>(it - candidates.begin());
            } else {
                cand_idx = detail::pick(masked, mode, rng);
            }
            const int tok = candidates[static_cast<std::size_t>(cand_idx)];

            res.log_prob = add(res.log_prob, detail::log_prob_at(masked, cand_idx));
            res.entropy = add(res.entropy, detail::plogp(masked));
            res.decision.object_ids.push_back(tok);
            obj_words.push_back(vocab.token(tok));

            std::vector<double> full(static_cast<std::size_t>(vocab.size()), 0.0);
            for (std::size_t c = 0; c < candidates.size(); ++c)
                full[static_cast<std::size_t>(candidates[c])] = masked->data[c];
            res.decision.object_dists.push_back(std::move(full));

            x = transpose(rows_at(p.obj_emb, {static_cast<std::size_t>(tok)}));
        }
    }
    res.decision.action = render_action(tmpl, obj_words);
    res.decision.log_prob = res.log_prob->data[0];
    return res;
}

// Differentiable log pi for a stored decision (actor loss term).
inline TensorPtr action_log_prob(const TensorPtr& v_t, const TemplateSet& templates,
                                 const std::vector<int>& candidates, const DecoderParams& p,
                                 const Vocabulary& vocab, const ActionDecision& chosen) {
    return decode_action(v_t, templates, candidates, p, vocab, DecodeMode::Greedy, nullptr, &chosen)
        .log_prob;
}

}  // namespace shakg
