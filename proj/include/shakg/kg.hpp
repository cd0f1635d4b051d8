#pragma once

// Knowledge graph: triple extraction, the per-step graph update, and the
// four-way sub-graph partition feeding the low-level attention.

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "shakg/vocab.hpp"

namespace shakg {

// Lowercase, trimmed, internal whitespace collapsed. Idempotent.
inline std::string normalize(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char ch : s) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!out.empty()) pending_space = true;
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    return out;
}

struct Triple {
    std::string subject;
    std::string relation;
    std::string object;

    auto operator<=>(const Triple&) const = default;
};

inline Triple make_triple(const std::string& s, const std::string& r, const std::string& o) {
    Triple t{normalize(s), normalize(r), normalize(o)};
    if (t.subject.empty() || t.relation.empty() || t.object.empty())
        throw std::invalid_argument("Triple: empty field in <" + s + ", " + r + ", " + o + ">");
    return t;
}

class KnowledgeGraph {
public:
    const std::set<Triple>& edges() const { return edges_; }
    const std::string& current_room() const { return current_room_; }
    const std::set<Triple>& last_update() const { return last_update_; }

    std::set<std::string> nodes() const {
        std::set<std::string> out;
        for (const auto& t : edges_) {
            out.insert(t.subject);
            out.insert(t.object);
        }
        return out;
    }

    // Stable per-episode index: a node keeps its slot once seen.
    int node_index(const std::string& node) const {
        auto it = index_.find(node);
        return it == index_.end() ? -1 : it->second;
    }

    // Every step replaces the player's edges and unions in the new facts.
    void update(const std::set<Triple>& new_triples) {
        const Triple* you_in = nullptr;
        for (const auto& t : new_triples)
            if (t.subject == "you" && t.relation == "in") you_in = &t;
        if (!you_in)
            throw std::invalid_argument("graph_update: step triples lack a <you, in, room> edge");
        for (auto it = edges_.begin(); it != edges_.end();)
            it = (it->subject == "you") ? edges_.erase(it) : std::next(it);
        for (const auto& t : new_triples) {
            edges_.insert(t);
            touch(t.subject);
            touch(t.object);
        }
        current_room_ = you_in->object;
        last_update_ = new_triples;
    }

    void clear() {
        edges_.clear();
        index_.clear();
        order_.clear();
        current_room_.clear();
        last_update_.clear();
    }

    const std::vector<std::string>& indexed_nodes() const { return order_; }

private:
    void touch(const std::string& node) {
        if (index_.emplace(node, static_cast<int>(order_.size())).second) order_.push_back(node);
    }

    std::set<Triple> edges_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> order_;
    std::string current_room_;
    std::set<Triple> last_update_;
};

inline KnowledgeGraph graph_update(const KnowledgeGraph& kg, const std::set<Triple>& new_triples) {
    KnowledgeGraph out = kg;
    out.update(new_triples);
    return out;
}

// Rule-based extraction from environment-reported object lists plus the room
// connectivity inferred from a successful navigational action.
inline std::set<Triple> extract_triples(const std::string& current_room,
                                        const std::vector<std::string>& interactables,
                                        const std::vector<std::string>& inventory_items,
                                        const std::string& prev_room = "",
                                        const std::optional<std::string>& nav_action = std::nullopt) {
    const std::string room = normalize(current_room);
    std::set<Triple> out;
    out.insert(make_triple("you", "in", room));
    std::set<std::string> inv;
    for (const auto& item : inventory_items) {
        out.insert(make_triple("you", "have", item));
        inv.insert(normalize(item));
    }
    for (const auto& obj : interactables)
        if (!inv.count(normalize(obj))) out.insert(make_triple(obj, "in", room));
    if (nav_action && !prev_room.empty())
        out.insert(make_triple(prev_room, normalize(*nav_action) + " of", room));
    return out;
}

enum class PartitionStrategy { Full, NoRelational, NoTemporal, NoHistory };

inline PartitionStrategy parse_strategy(const std::string& name) {
    if (name == "full") return PartitionStrategy::Full;
    if (name == "no-relational") return PartitionStrategy::NoRelational;
    if (name == "no-temporal") return PartitionStrategy::NoTemporal;
    if (name == "no-history") return PartitionStrategy::NoHistory;
    throw std::invalid_argument("partition: unknown strategy '" + name + "'");
}

inline std::string strategy_name(PartitionStrategy s) {
    switch (s) {
        case PartitionStrategy::Full: return "full";
        case PartitionStrategy::NoRelational: return "no-relational";
        case PartitionStrategy::NoTemporal: return "no-temporal";
        case PartitionStrategy::NoHistory: return "no-history";
    }
    return "?";
}

// Read-only slice of a graph; node order comes from the source node index.
struct KgView {
    std::string name;
    std::vector<Triple> edges;
};

struct SubGraphSet {
    PartitionStrategy strategy = PartitionStrategy::Full;
    std::vector<KgView> parts;
    const KnowledgeGraph* source = nullptr;
};

namespace detail {

inline bool is_connectivity(const Triple& t) {
    return t.relation.size() > 3 && t.relation.compare(t.relation.size() - 3, 3, " of") == 0;
}
inline bool is_room_membership(const Triple& t, const std::string& room) {
    return t.relation == "in" && t.object == room;
}
inline bool is_inventory(const Triple& t) { return t.subject == "you" && t.relation == "have"; }
inline bool is_history(const Triple& t) { return t.subject != "you" && t.object != "you"; }

}  // namespace detail

inline SubGraphSet partition(const KnowledgeGraph& kg, PartitionStrategy strategy) {
    if (kg.current_room().empty() && !kg.edges().empty())
        throw std::invalid_argument("partition: current_room not set");
    const std::string& room = kg.current_room();

    auto collect = [](const auto& edges, auto pred) {
        std::vector<Triple> out;
        for (const auto& t : edges)
            if (pred(t)) out.push_back(t);
        return out;
    };

    SubGraphSet set;
    set.strategy = strategy;
    set.source = &kg;
    switch (strategy) {
        case PartitionStrategy::Full:
        case PartitionStrategy::NoHistory: {
            const auto& src =
                strategy == PartitionStrategy::NoHistory ? kg.last_update() : kg.edges();
            set.parts.push_back({"connectivity", collect(src, detail::is_connectivity)});
            set.parts.push_back({"item_in_room", collect(src, [&](const Triple& t) {
                                     return detail::is_room_membership(t, room);
                                 })});
            set.parts.push_back({"item_in_inv", collect(src, detail::is_inventory)});
            set.parts.push_back({"history", collect(src, detail::is_history)});
            break;
        }
        case PartitionStrategy::NoRelational: {
            set.parts.push_back({"connectivity", collect(kg.edges(), detail::is_connectivity)});
            set.parts.push_back({"items", collect(kg.edges(), [&](const Triple& t) {
                                     return detail::is_room_membership(t, room) ||
                                            detail::is_inventory(t);
                                 })});
            set.parts.push_back({"history", collect(kg.edges(), detail::is_history)});
            break;
        }
        case PartitionStrategy::NoTemporal: {
            // History folds into the present views: all connectivity edges in
            // part 1, all room-membership edges in part 2.
            set.parts.push_back({"connectivity", collect(kg.edges(), detail::is_connectivity)});
            set.parts.push_back({"item_in_room", collect(kg.edges(), [](const Triple& t) {
                                     return t.relation == "in";
                                 })});
            set.parts.push_back({"item_in_inv", collect(kg.edges(), detail::is_inventory)});
            break;
        }
    }
    return set;
}

// Tokens naming KG nodes; multi-word node names contribute each word.
inline std::vector<int> object_candidates(const KnowledgeGraph& kg, const Vocabulary& vocab) {
    std::set<int> ids;
    for (const auto& node : kg.nodes())
        for (const auto& word : split_words(node))
            if (vocab.contains(word)) ids.insert(vocab.id(word));
    return {ids.begin(), ids.end()};
}

struct Adjacency {
    std::vector<std::string> nodes;
    std::vector<std::uint8_t> matrix;  // n x n, row-major, self-loops set

    bool at(std::size_t i, std::size_t j) const { return matrix[i * nodes.size() + j] != 0; }
};

// Undirected adjacency with self-loops; node order follows the source index.
inline Adjacency to_adjacency(const KnowledgeGraph& kg, const KgView& view) {
    std::set<std::string> present;
    for (const auto& t : view.edges) {
        present.insert(t.subject);
        present.insert(t.object);
    }
    Adjacency adj;
    adj.nodes.assign(present.begin(), present.end());
    std::sort(adj.nodes.begin(), adj.nodes.end(), [&](const auto& a, const auto& b) {
        return kg.node_index(a) < kg.node_index(b);
    });
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < adj.nodes.size(); ++i) pos[adj.nodes[i]] = i;
    const std::size_t n = adj.nodes.size();
    adj.matrix.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) adj.matrix[i * n + i] = 1;
    for (const auto& t : view.edges) {
        const std::size_t i = pos[t.subject], j = pos[t.object];
        adj.matrix[i * n + j] = 1;
        adj.matrix[j * n + i] = 1;
    }
    return adj;
}

// Snapshot: one tab-separated triple per line, sorted lexicographically.
inline void write_snapshot(const KnowledgeGraph& kg, std::ostream& out) {
    for (const auto& t : kg.edges()) out << t.subject << '\t' << t.relation << '\t' << t.object << '\n';
}

inline void write_snapshot(const KnowledgeGraph& kg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_snapshot: cannot write " + path);
    write_snapshot(kg, out);
}

inline std::set<Triple> read_snapshot(std::istream& in) {
    std::set<Triple> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string s, r, o;
        if (!std::getline(ls, s, '\t') || !std::getline(ls, r, '\t') || !std::getline(ls, o))
            throw std::runtime_error("read_snapshot: malformed line '" + line + "'");
        out.insert(Triple{s, r, o});
    }
    return out;
}

}  // namespace shakg
