#pragma once

// MiniQuest: a deterministic toy text game exposing the textual observation
// bundle, raw score, a brute-force valid-action oracle, and episode
// termination. Stands in for the Jericho interface at desk scale.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "shakg/decoder.hpp"
#include "shakg/vocab.hpp"

namespace shakg {

struct ObservationBundle {
    std::string desc;
    std::string inv;
    std::string feed;
    std::string last_action;
    int score = 0;
    std::vector<std::string> interactables;
    std::vector<std::string> inventory_items;
    std::string room_id;
};

struct Room {
    std::string id;
    std::string name;
    std::string desc;
    std::vector<std::pair<std::string, std::string>> exits;  // direction -> room id
};

struct WorldObject {
    std::string id;        // single lowercase word, used in actions
    std::string name;      // display name
    std::string location;  // room id or container object id
    bool portable = false;
    bool container = false;
    bool locked = false;
    std::string unlocks;  // object id this one opens, if any
};

struct WorldSpec {
    std::vector<Room> rooms;
    std::vector<WorldObject> objects;
    std::string start;
    std::vector<std::tuple<std::string, std::string, int>> rewards;  // verb, object, points
    std::vector<std::string> walkthrough_actions;

    int max_score() const {
        int total = 0;
        for (const auto& [verb, obj, pts] : rewards) total += pts;
        return total;
    }

    const Room* room(const std::string& id) const {
        for (const auto& r : rooms)
            if (r.id == id) return &r;
        return nullptr;
    }

    const WorldObject* object(const std::string& id) const {
        for (const auto& o : objects)
            if (o.id == id) return &o;
        return nullptr;
    }

    void validate() const {
        if (!room(start)) throw std::invalid_argument("WorldSpec: start room '" + start + "' missing");
        for (const auto& r : rooms)
            for (const auto& [dir, dst] : r.exits)
                if (!room(dst))
                    throw std::invalid_argument("WorldSpec: exit " + r.id + " " + dir +
                                                " references missing room '" + dst + "'");
        for (const auto& o : objects)
            if (!room(o.location) && !object(o.location))
                throw std::invalid_argument("WorldSpec: object '" + o.id +
                                            "' located in unknown '" + o.location + "'");
        for (const auto& [verb, obj, pts] : rewards) {
            if (pts < 0) throw std::invalid_argument("WorldSpec: negative reward for " + verb);
            if (!object(obj))
                throw std::invalid_argument("WorldSpec: reward references missing object '" + obj + "'");
        }
    }

    // Line-oriented key-value schema; fields with spaces are '|'-separated.
    static WorldSpec parse(std::istream& in) {
        WorldSpec spec;
        std::string line;
        int lineno = 0;
        auto fields = [](const std::string& rest) {
            std::vector<std::string> out;
            std::string cur;
            std::istringstream ss(rest);
            while (std::getline(ss, cur, '|')) {
                while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
                while (!cur.empty() && cur.back() == ' ') cur.pop_back();
                out.push_back(cur);
            }
            return out;
        };
        while (std::getline(in, line)) {
            ++lineno;
            while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ss(line);
            std::string kind;
            ss >> kind;
            std::string rest;
            std::getline(ss, rest);
            if (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
            if (kind == "start") {
                spec.start = rest;
            } else if (kind == "room") {
                auto f = fields(rest);
                if (f.size() != 3)
                    throw std::invalid_argument("WorldSpec line " + std::to_string(lineno) +
                                                ": room needs id|name|description");
                spec.rooms.push_back({f[0], f[1], f[2], {}});
            } else if (kind == "exit") {
                std::istringstream es(rest);
                std::string from, dir, to;
                es >> from >> dir >> to;
                bool added = false;
                for (auto& r : spec.rooms)
                    if (r.id == from) {
                        r.exits.emplace_back(dir, to);
                        added = true;
                    }
                if (!added)
                    throw std::invalid_argument("WorldSpec line " + std::to_string(lineno) +
                                                ": exit from unknown room '" + from + "'");
            } else if (kind == "object") {
                auto f = fields(rest);
                if (f.size() < 3)
                    throw std::invalid_argument("WorldSpec line " + std::to_string(lineno) +
                                                ": object needs id|name|location[|flags]");
                WorldObject o;
                o.id = f[0];
                o.name = f[1];
                o.location = f[2];
                if (f.size() > 3) {
                    std::istringstream flags(f[3]);
                    std::string flag;
                    while (std::getline(flags, flag, ',')) {
                        if (flag == "portable") o.portable = true;
                        else if (flag == "container") o.container = true;
                        else if (flag == "locked") o.locked = true;
                        else if (flag.rfind("unlocks:", 0) == 0) o.unlocks = flag.substr(8);
                        else
                            throw std::invalid_argument("WorldSpec line " + std::to_string(lineno) +
                                                        ": unknown flag '" + flag + "'");
                    }
                }
                spec.objects.push_back(std::move(o));
            } else if (kind == "reward") {
                std::istringstream rs(rest);
                std::string verb, obj;
                int pts = 0;
                rs >> verb >> obj >> pts;
                spec.rewards.emplace_back(verb, obj, pts);
            } else if (kind == "walkthrough") {
                spec.walkthrough_actions = fields(rest);
            } else {
                throw std::invalid_argument("WorldSpec line " + std::to_string(lineno) +
                                            ": unknown entry '" + kind + "'");
            }
        }
        spec.validate();
        return spec;
    }

    static WorldSpec load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("WorldSpec: cannot open " + path);
        return parse(in);
    }
};

struct StepResult {
    ObservationBundle obs;
    double reward = 0.0;
    bool done = false;
    bool valid = false;
};

inline const char* kNothingHappens = "Nothing happens";

class MiniEnv {
public:
    // Spec and grammar are immutable and shared; copies (the validity oracle
    // clones per probe) duplicate only the small mutable state.
    MiniEnv(WorldSpec spec, TemplateSet templates)
        : spec_(std::make_shared<const WorldSpec>(std::move(spec))),
          templates_(std::make_shared<const TemplateSet>(std::move(templates))) {
        spec_->validate();
        reset();
    }

    MiniEnv(std::shared_ptr<const WorldSpec> spec, std::shared_ptr<const TemplateSet> templates)
        : spec_(std::move(spec)), templates_(std::move(templates)) {
        spec_->validate();
        reset();
    }

    ObservationBundle reset(std::uint64_t /*seed*/ = 0) {
        loc_.clear();
        locked_.clear();
        open_.clear();
        for (const auto& o : spec_->objects) {
            loc_[o.id] = o.location;
            locked_[o.id] = o.locked;
            open_[o.id] = false;
        }
        room_ = spec_->start;
        score_ = 0;
        fired_.clear();
        valid_steps_ = 0;
        raw_steps_ = 0;
        done_ = false;
        last_action_ = "look";
        feed_ = describe_room();
        return observe();
    }

    StepResult step(const std::string& action) {
        ++raw_steps_;
        double reward = 0.0;
        auto parsed = parse_action(*templates_, action);
        bool valid = false;
        if (parsed) {
            const Template& tmpl = templates_->items[static_cast<std::size_t>(parsed->first)];
            valid = apply(tmpl, parsed->second, reward);
        }
        if (!valid) feed_ = kNothingHappens;
        last_action_ = action;
        if (valid) ++valid_steps_;
        if (score_ >= spec_->max_score()) done_ = true;
        if (valid_step_limit_ > 0 && valid_steps_ >= valid_step_limit_) done_ = true;
        if (raw_step_limit_ > 0 && raw_steps_ >= raw_step_limit_) done_ = true;
        return {observe(), reward, done_, valid};
    }

    ObservationBundle observe() const {
        ObservationBundle obs;
        obs.room_id = room_;
        obs.desc = describe_room();
        obs.inventory_items = held_names();
        obs.interactables = visible_names();
        obs.inv = obs.inventory_items.empty() ? "You are empty-handed."
                                              : "You are carrying: " + join(obs.inventory_items);
        obs.feed = feed_;
        obs.last_action = last_action_;
        obs.score = score_;
        return obs;
    }

    // Brute force over every template x object combination on a cloned state.
    std::set<std::string> valid_actions() const {
        std::set<std::string> out;
        for (const auto& [ti, objs] : valid_decisions())
            out.insert(render_action(templates_->items[static_cast<std::size_t>(ti)], objs));
        return out;
    }

    std::vector<std::pair<int, std::vector<std::string>>> valid_decisions() const {
        std::vector<std::pair<int, std::vector<std::string>>> out;
        std::vector<std::string> ids;
        for (const auto& o : spec_->objects) ids.push_back(o.id);
        for (int ti = 0; ti < templates_->size(); ++ti) {
            const auto& tmpl = templates_->items[static_cast<std::size_t>(ti)];
            std::vector<std::vector<std::string>> combos{{}};
            for (int s = 0; s < tmpl.slots; ++s) {
                std::vector<std::vector<std::string>> next;
                for (const auto& prefix : combos)
                    for (const auto& id : ids) {
                        auto ext = prefix;
                        ext.push_back(id);
                        next.push_back(std::move(ext));
                    }
                combos = std::move(next);
            }
            for (const auto& objs : combos) {
                MiniEnv probe = *this;
                if (probe.step(render_action(tmpl, objs)).valid) out.emplace_back(ti, objs);
            }
        }
        return out;
    }

    // Stored walkthrough, replay-verified to reach max score.
    std::vector<std::string> walkthrough() const {
        MiniEnv probe(spec_, templates_);
        int total = 0;
        for (const auto& action : spec_->walkthrough_actions) {
            auto res = probe.step(action);
            if (!res.valid)
                throw std::runtime_error("walkthrough: action '" + action + "' is invalid");
            total += static_cast<int>(res.reward);
        }
        if (total != spec_->max_score())
            throw std::runtime_error("walkthrough: reaches " + std::to_string(total) + " of " +
                                     std::to_string(spec_->max_score()));
        return spec_->walkthrough_actions;
    }

    bool done() const { return done_; }
    int score() const { return score_; }
    int max_score() const { return spec_->max_score(); }
    int valid_steps() const { return valid_steps_; }
    int raw_steps() const { return raw_steps_; }
    const std::string& room_id() const { return room_; }
    const WorldSpec& spec() const { return *spec_; }
    const TemplateSet& templates() const { return *templates_; }

    void set_valid_step_limit(int limit) { valid_step_limit_ = limit; }
    void set_raw_step_limit(int limit) { raw_step_limit_ = limit; }

private:
    static std::string join(const std::vector<std::string>& parts) {
        std::string out;
        for (const auto& p : parts) {
            if (!out.empty()) out += ", ";
            out += p;
        }
        return out;
    }

    bool in_room(const std::string& id) const { return loc_.at(id) == room_; }
    bool held(const std::string& id) const { return loc_.at(id) == "inv"; }

    bool visible(const std::string& id) const {
        if (in_room(id)) return true;
        const std::string& l = loc_.at(id);
        const WorldObject* holder = spec_->object(l);
        return holder && open_.at(holder->id) && loc_.at(holder->id) == room_;
    }

    std::vector<std::string> visible_names() const {
        std::vector<std::string> out;
        for (const auto& o : spec_->objects)
            if (visible(o.id) && !held(o.id)) out.push_back(o.name);
        return out;
    }

    std::vector<std::string> held_names() const {
        std::vector<std::string> out;
        for (const auto& o : spec_->objects)
            if (held(o.id)) out.push_back(o.name);
        return out;
    }

    std::string describe_room() const {
        const Room* r = spec_->room(room_);
        std::string out = r->name + ". " + r->desc;
        auto vis = visible_names();
        if (!vis.empty()) out += " You see: " + join(vis) + ".";
        if (!r->exits.empty()) {
            out += " Exits:";
            for (const auto& [dir, dst] : r->exits) out += " " + dir;
            out += ".";
        }
        return out;
    }

    void fire_reward(const std::string& verb, const std::string& obj, double& reward) {
        for (const auto& [rverb, robj, pts] : spec_->rewards) {
            if (rverb != verb || robj != obj) continue;
            const std::string key = verb + " " + obj;
            if (fired_.insert(key).second) {
                score_ += pts;
                reward += pts;
            }
        }
    }

    // Returns true when the action had an effect; fills feed_.
    bool apply(const Template& tmpl, const std::vector<std::string>& objs, double& reward) {
        const std::string& verb = tmpl.tokens.front();
        const Room* here = spec_->room(room_);

        if (tmpl.slots == 0) {
            for (const auto& [dir, dst] : here->exits)
                if (dir == verb) {
                    room_ = dst;
                    feed_ = "You walk " + dir + ".";
                    return true;
                }
            if (verb == "look") {
                feed_ = describe_room();
                return true;
            }
            return false;
        }

        const WorldObject* first = spec_->object(objs[0]);
        if (!first) return false;
        const std::string& id = first->id;

        if (verb == "take") {
            if (!visible(id) || held(id) || !first->portable) return false;
            loc_[id] = "inv";
            feed_ = "Taken.";
            fire_reward("take", id, reward);
            return true;
        }
        if (verb == "drop") {
            if (!held(id)) return false;
            loc_[id] = room_;
            feed_ = "Dropped.";
            fire_reward("drop", id, reward);
            return true;
        }
        if (verb == "open") {
            if (!visible(id) || !first->container || locked_.at(id) || open_.at(id)) return false;
            open_[id] = true;
            feed_ = "You open the " + first->name + ".";
            std::vector<std::string> inside;
            for (const auto& o : spec_->objects)
                if (loc_.at(o.id) == id) inside.push_back(o.name);
            feed_ += inside.empty() ? " It is empty." : " Inside is a " + join(inside) + ".";
            fire_reward("open", id, reward);
            return true;
        }
        if (verb == "unlock") {
            if (!visible(id) || !locked_.at(id)) return false;
            const WorldObject* key = nullptr;
            for (const auto& o : spec_->objects)
                if (held(o.id) && o.unlocks == id) key = &o;
            if (!key) return false;
            if (objs.size() == 2 && objs[1] != key->id) return false;
            locked_[id] = false;
            feed_ = "You unlock the " + first->name + ".";
            fire_reward("unlock", id, reward);
            return true;
        }
        if (verb == "put") {
            if (objs.size() != 2) return false;
            const WorldObject* dest = spec_->object(objs[1]);
            if (!dest || !held(id) || id == dest->id) return false;
            if (!dest->container || !open_.at(dest->id) || !visible(dest->id)) return false;
            loc_[id] = dest->id;
            feed_ = "Done.";
            fire_reward("put", id, reward);
            return true;
        }
        return false;
    }

    std::shared_ptr<const WorldSpec> spec_;
    std::shared_ptr<const TemplateSet> templates_;
    std::map<std::string, std::string> loc_;
    std::map<std::string, bool> locked_;
    std::map<std::string, bool> open_;
    std::string room_;
    int score_ = 0;
    std::set<std::string> fired_;
    int valid_steps_ = 0;
    int raw_steps_ = 0;
    bool done_ = false;
    std::string last_action_ = "look";
    std::string feed_;
    int valid_step_limit_ = 100;
    int raw_step_limit_ = 0;
};

// Every word the engine or world content can emit; source for the shipped
// vocabulary file.
inline std::vector<std::string> world_vocabulary(const WorldSpec& spec,
                                                 const TemplateSet& templates) {
    std::set<std::string> words;
    auto absorb = [&](const std::string& text) {
        for (const auto& w : split_words(text)) words.insert(w);
    };
    for (const auto& r : spec.rooms) {
        absorb(r.id);
        absorb(r.name);
        absorb(r.desc);
        for (const auto& [dir, dst] : r.exits) absorb(dir);
    }
    for (const auto& o : spec.objects) {
        absorb(o.id);
        absorb(o.name);
    }
    for (const auto& t : templates.items) absorb(t.text);
    for (const char* phrase :
         {"You are empty-handed.", "You are carrying:", "You see:", "Exits:", "Taken.", "Dropped.",
          "Done.", "Nothing happens", "You walk", "You open the", "You unlock the", "It is empty.",
          "Inside is a", "look", "obj"})
        absorb(phrase);
    return {words.begin(), words.end()};
}

}  // namespace shakg
