#pragma once

// A2C with the valid-action auxiliary task: parallel rollout collection,
// the five-term weighted loss, and the optimizer schedule (one Adam step per
// collected window).

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "shakg/config.hpp"
#include "shakg/env.hpp"
#include "shakg/kg.hpp"
#include "shakg/model.hpp"
#include "shakg/params.hpp"

namespace shakg {

struct Transition {
    ObservationBundle obs;
    KnowledgeGraph kg;  // snapshot after the step-t graph update
    std::vector<int> candidates;
    ActionDecision decision;
    double reward = 0.0;
    double value = 0.0;
    double next_value = 0.0;
    bool done = false;
    std::vector<double> y_template;  // |T|, valid-template labels
    std::vector<double> y_object;    // |V|, KG-word labels
};

using RolloutBatch = std::vector<Transition>;

// Q = r + gamma * V(s') (zeroed at terminals); A = Q - V(s). The advantage is
// a constant in the actor loss.
inline std::pair<double, double> compute_q_advantage(double r, double v_next, double v,
                                                     double gamma, bool done) {
    const double q = r + gamma * v_next * (done ? 0.0 : 1.0);
    return {q, q - v};
}

namespace detail {

// p -> 1e-7 + (1 - 2e-7) p: differentiable clamp keeping BCE logs finite.
inline TensorPtr clamp_probs(const TensorPtr& probs) {
    constexpr double eps = 1e-7;
    auto floor_t = tensor(probs->rows, probs->cols, eps);
    return add(smul(probs, 1.0 - 2.0 * eps), floor_t);
}

}  // namespace detail

// Mean binary cross-entropy of a probability row against fixed labels.
inline TensorPtr bce_loss(const TensorPtr& probs_row, const std::vector<double>& labels) {
    if (probs_row->rows != 1 || probs_row->cols != labels.size())
        throw std::invalid_argument("bce_loss: " + shape_str(*probs_row) + " vs " +
                                    std::to_string(labels.size()) + " labels");
    auto p = detail::clamp_probs(probs_row);
    for (double v : p->data)
        if (!(v > 0.0 && v < 1.0))
            throw std::domain_error("bce_loss: probability " + std::to_string(v) +
                                    " outside (0,1) after clamping");
    auto y = tensor(1, labels.size());
    auto y_inv = tensor(1, labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        y->data[i] = labels[i];
        y_inv->data[i] = 1.0 - labels[i];
    }
    auto ones = tensor(1, labels.size(), 1.0);
    auto term = add(mul(y, log(p)), mul(y_inv, log(sub(ones, p))));
    return smul(sum_all(term), -1.0 / static_cast<double>(labels.size()));
}

struct LossTerms {
    TensorPtr total;  // 1x1
    double actor = 0.0;
    double critic = 0.0;
    double entropy = 0.0;
    double tmpl = 0.0;
    double obj = 0.0;
};

inline double total_loss(double actor, double critic, double entropy, double tmpl, double obj,
                         const RunConfig& cfg) {
    return actor + cfg.lambda_critic * critic + cfg.lambda_entropy * entropy +
           cfg.lambda_template * tmpl + cfg.lambda_object * obj;
}

// Recompute the policy on one stored transition (teacher-forced) and build
// its contribution to every loss term.
inline LossTerms transition_loss(const ShaKgModel& model, const Transition& tr,
                                 const RunConfig& cfg, EncodingCache* cache = nullptr) {
    auto fw = model.forward(tr.obs, tr.kg, tr.candidates, DecodeMode::Greedy, nullptr,
                            &tr.decision, cache);
    auto [q, adv] = compute_q_advantage(tr.reward, tr.next_value, tr.value, cfg.gamma, tr.done);

    LossTerms out;
    auto actor = smul(fw.dec.log_prob, -adv);
    auto target = tensor(1, 1, q);
    auto td = sub(target, fw.value);
    auto critic = mul(td, td);
    auto entropy = fw.dec.entropy;  // sum p log p, <= 0
    auto tmpl = bce_loss(fw.dec.template_probs, tr.y_template);
    TensorPtr obj = tensor(1, 1, 0.0);
    for (const auto& slot_probs : fw.dec.slot_unmasked)
        obj = add(obj, bce_loss(slot_probs, tr.y_object));

    out.actor = actor->data[0];
    out.critic = critic->data[0];
    out.entropy = entropy->data[0];
    out.tmpl = tmpl->data[0];
    out.obj = obj->data[0];
    out.total = add(actor, add(smul(critic, cfg.lambda_critic),
                               add(smul(entropy, cfg.lambda_entropy),
                                   add(smul(tmpl, cfg.lambda_template),
                                       smul(obj, cfg.lambda_object)))));

    const char* names[] = {"actor", "critic", "entropy", "template", "object"};
    const double values[] = {out.actor, out.critic, out.entropy, out.tmpl, out.obj};
    for (int i = 0; i < 5; ++i)
        if (!std::isfinite(values[i]))
            throw std::runtime_error(std::string("rl_losses: non-finite ") + names[i] + " loss");
    return out;
}

struct BatchLoss {
    TensorPtr total;  // 1x1, mean over the batch
    double actor = 0.0, critic = 0.0, entropy = 0.0, tmpl = 0.0, obj = 0.0, value = 0.0;
};

// Whole-batch loss as one graph; the training loop instead backpropagates
// per transition (identical gradients by linearity, far smaller peak graph).
inline BatchLoss batch_loss(const ShaKgModel& model, const RolloutBatch& batch,
                            const RunConfig& cfg, EncodingCache* cache = nullptr) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    BatchLoss out;
    TensorPtr total = tensor(1, 1, 0.0);
    for (const auto& tr : batch) {
        auto lt = transition_loss(model, tr, cfg, cache);
        total = add(total, lt.total);
        out.actor += lt.actor;
        out.critic += lt.critic;
        out.entropy += lt.entropy;
        out.tmpl += lt.tmpl;
        out.obj += lt.obj;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.total = smul(total, inv);
    out.actor *= inv;
    out.critic *= inv;
    out.entropy *= inv;
    out.tmpl *= inv;
    out.obj *= inv;
    out.value = out.total->data[0];
    return out;
}

inline int rollout_threads(int num_envs) {
    if (const char* env = std::getenv("SHAKG_THREADS")) {
        try {
            return std::min(std::max(1, std::stoi(env)), num_envs);
        } catch (const std::exception&) {
        }
    }
    // default cap is num_envs; more workers than cores only adds churn
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    return std::min(num_envs, std::max(1, hw));
}

class Trainer {
public:
    using MetricsFn = std::function<void(long episode, long step, double score, double avg100)>;
    using CheckpointFn = std::function<void(long update_index, bool final_checkpoint)>;

    Trainer(std::shared_ptr<ShaKgModel> model, std::shared_ptr<const WorldSpec> world,
            const RunConfig& cfg)
        : model_(std::move(model)), world_(std::move(world)), cfg_(cfg) {
        cfg_.validate();
        auto templates = std::make_shared<const TemplateSet>(model_->templates());
        for (int i = 0; i < cfg_.num_envs; ++i) {
            Slot slot(MiniEnv(world_, templates));
            slot.env.set_valid_step_limit(cfg_.episode_valid_step_limit);
            slot.env.set_raw_step_limit(cfg_.episode_raw_step_limit);
            slot.rng.seed(cfg_.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(i) + 1);
            slots_.push_back(std::move(slot));
        }
    }

    long steps_done() const { return steps_done_; }
    long episodes_done() const { return episodes_done_; }
    long updates_done() const { return updates_done_; }
    double last_avg100() const { return last_avg100_; }

    // One collection window across every environment.
    RolloutBatch collect() {
        for (auto& slot : slots_) slot.cache.clear();  // params moved last update
        const int threads = rollout_threads(cfg_.num_envs);
        if (threads <= 1) {
            for (auto& slot : slots_) collect_slot(slot, cfg_.steps_per_update);
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < threads; ++w)
                pool.emplace_back([this, w, threads]() {
                    for (std::size_t i = static_cast<std::size_t>(w); i < slots_.size();
                         i += static_cast<std::size_t>(threads))
                        collect_slot(slots_[i], cfg_.steps_per_update);
                });
            for (auto& t : pool) t.join();
        }
        RolloutBatch batch;
        for (auto& slot : slots_) {
            for (auto& tr : slot.ready) batch.push_back(std::move(tr));
            slot.ready.clear();
        }
        steps_done_ += static_cast<long>(batch.size());
        return batch;
    }

    // Recompute the whole window as one graph (cached encodings are shared
    // subgraphs, so there must be exactly one backward call), then one Adam
    // step.
    BatchLoss update(const RolloutBatch& batch) {
        if (batch.empty()) throw std::invalid_argument("update: empty batch");
        model_->store().zero_grad();
        EncodingCache cache;
        auto bl = batch_loss(*model_, batch, cfg_, &cache);
        if (!std::isfinite(bl.value)) throw std::runtime_error("update: non-finite total loss");
        backward(bl.total);
        adam_step(model_->store(), adam_, cfg_.lr);
        ++updates_done_;
        return bl;
    }

    void run(const MetricsFn& metrics = {}, const CheckpointFn& checkpoint = {}) {
        while (steps_done_ < cfg_.total_steps) {
            auto batch = collect();
            flush_episodes(metrics);
            update(batch);
            if (checkpoint && cfg_.checkpoint_interval > 0 &&
                updates_done_ % cfg_.checkpoint_interval == 0)
                checkpoint(updates_done_, false);
        }
        if (checkpoint) checkpoint(updates_done_, true);
    }

private:
    struct Slot {
        explicit Slot(MiniEnv e) : env(std::move(e)) {}
        MiniEnv env;
        KnowledgeGraph kg;
        std::mt19937_64 rng;
        ObservationBundle obs;
        bool fresh = true;
        std::optional<Transition> pending;
        std::vector<Transition> ready;
        std::vector<double> finished_scores;
        EncodingCache cache;  // value reuse within one window (no-grad)
    };

    void reset_slot(Slot& slot) {
        slot.obs = slot.env.reset();
        slot.kg.clear();
        slot.kg.update(
            extract_triples(slot.obs.room_id, slot.obs.interactables, slot.obs.inventory_items));
        slot.fresh = false;
    }

    void collect_slot(Slot& slot, int steps) {
        NoGradGuard no_grad;
        for (int k = 0; k < steps; ++k) {
            if (slot.fresh) reset_slot(slot);
            auto candidates = object_candidates(slot.kg, model_->vocab());
            auto fw = model_->forward(slot.obs, slot.kg, candidates, DecodeMode::Sample,
                                      &slot.rng, nullptr, &slot.cache);
            if (slot.pending) {
                slot.pending->next_value = fw.value_scalar;
                slot.ready.push_back(std::move(*slot.pending));
                slot.pending.reset();
            }

            Transition tr;
            tr.obs = slot.obs;
            tr.kg = slot.kg;
            tr.candidates = candidates;
            tr.y_template.assign(static_cast<std::size_t>(model_->templates().size()), 0.0);
            for (const auto& [ti, objs] : slot.env.valid_decisions())
                tr.y_template[static_cast<std::size_t>(ti)] = 1.0;
            tr.y_object.assign(static_cast<std::size_t>(model_->vocab().size()), 0.0);
            for (int id : candidates) tr.y_object[static_cast<std::size_t>(id)] = 1.0;
            tr.decision = fw.dec.decision;
            tr.value = fw.value_scalar;

            auto res = slot.env.step(fw.dec.decision.action);
            tr.reward = res.reward;
            tr.done = res.done;
            if (res.done) {
                tr.next_value = 0.0;
                slot.ready.push_back(std::move(tr));
                slot.finished_scores.push_back(static_cast<double>(res.obs.score));
                slot.fresh = true;
            } else {
                const std::string prev_room = slot.obs.room_id;
                slot.pending = std::move(tr);
                std::optional<std::string> nav;
                if (res.valid && res.obs.room_id != prev_room) nav = fw.dec.decision.action;
                slot.obs = res.obs;
                slot.kg.update(extract_triples(slot.obs.room_id, slot.obs.interactables,
                                               slot.obs.inventory_items, prev_room, nav));
            }
        }
        // Bootstrap the window's last pending transition at current params.
        if (slot.pending) {
            auto enc = model_->encode_state(slot.obs, slot.kg, &slot.cache);
            slot.pending->next_value = model_->value_of(enc.v_t)->data[0];
            slot.ready.push_back(std::move(*slot.pending));
            slot.pending.reset();
        }
    }

    void flush_episodes(const MetricsFn& metrics) {
        for (auto& slot : slots_) {
            for (double score : slot.finished_scores) {
                ++episodes_done_;
                last100_.push_back(score);
                if (last100_.size() > 100) last100_.pop_front();
                double sum = 0.0;
                for (double s : last100_) sum += s;
                last_avg100_ = sum / static_cast<double>(last100_.size());
                if (metrics) metrics(episodes_done_, steps_done_, score, last_avg100_);
            }
            slot.finished_scores.clear();
        }
    }

    std::shared_ptr<ShaKgModel> model_;
    std::shared_ptr<const WorldSpec> world_;
    RunConfig cfg_;
    AdamState adam_;
    std::vector<Slot> slots_;
    long steps_done_ = 0;
    long episodes_done_ = 0;
    long updates_done_ = 0;
    std::deque<double> last100_;
    double last_avg100_ = 0.0;
};

// ---------------------------------------------------------------------------
// Greedy evaluation and scripted-policy hooks.

struct EpisodeStep {
    int index = 0;  // 1-based step number
    ObservationBundle obs;
    std::set<Triple> new_triples;
    ForwardPass fw;
    double reward = 0.0;
    int score = 0;
    bool done = false;
};

// Runs one greedy episode, invoking the callback per step; returns the final
// raw score.
inline int run_greedy_episode(const ShaKgModel& model, MiniEnv& env,
                              const std::function<void(const EpisodeStep&)>& on_step = {}) {
    NoGradGuard no_grad;
    auto obs = env.reset();
    KnowledgeGraph kg;
    auto triples = extract_triples(obs.room_id, obs.interactables, obs.inventory_items);
    kg.update(triples);
    int index = 0;
    while (true) {
        auto candidates = object_candidates(kg, model.vocab());
        auto fw = model.forward(obs, kg, candidates, DecodeMode::Greedy);
        auto res = env.step(fw.dec.decision.action);
        if (on_step) {
            EpisodeStep step;
            step.index = ++index;
            step.obs = obs;
            step.new_triples = triples;
            step.fw = fw;
            step.reward = res.reward;
            step.score = res.obs.score;
            step.done = res.done;
            on_step(step);
        } else {
            ++index;
        }
        if (res.done) return res.obs.score;
        const std::string prev_room = obs.room_id;
        std::optional<std::string> nav;
        if (res.valid && res.obs.room_id != prev_room) nav = fw.dec.decision.action;
        obs = res.obs;
        triples = extract_triples(obs.room_id, obs.interactables, obs.inventory_items, prev_room, nav);
        kg.update(triples);
    }
}

inline double evaluate_model(const ShaKgModel& model, MiniEnv& env, int episodes) {
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) total += run_greedy_episode(model, env);
    return total / static_cast<double>(episodes);
}

// Evaluation with an injected policy (e.g. a scripted walkthrough replayer).
using ScriptedPolicy = std::function<std::string(const ObservationBundle&, const KnowledgeGraph&)>;

inline double evaluate_policy(MiniEnv& env, const ScriptedPolicy& policy, int episodes) {
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) {
        auto obs = env.reset();
        KnowledgeGraph kg;
        kg.update(extract_triples(obs.room_id, obs.interactables, obs.inventory_items));
        while (true) {
            const std::string action = policy(obs, kg);
            auto res = env.step(action);
            if (res.done) {
                total += res.obs.score;
                break;
            }
            const std::string prev_room = obs.room_id;
            std::optional<std::string> nav;
            if (res.valid && res.obs.room_id != prev_room) nav = action;
            obs = res.obs;
            kg.update(extract_triples(obs.room_id, obs.interactables, obs.inventory_items,
                                      prev_room, nav));
        }
    }
    return total / static_cast<double>(episodes);
}

}  // namespace shakg
