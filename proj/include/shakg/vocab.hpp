#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace shakg {

// Lowercase words: runs of [a-z0-9], everything else is a delimiter.
inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocabulary() {
        tokens_ = {"<pad>", "<unk>"};
        ids_ = {{"<pad>", kPad}, {"<unk>", kUnk}};
    }

    static Vocabulary from_tokens(std::vector<std::string> tokens) {
        Vocabulary v;
        for (auto& t : tokens) v.add(t);
        return v;
    }

    // File format: one token per line; line 1 gets the first id after the
    // reserved pad/unk ids.
    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("Vocabulary: cannot open " + path);
        Vocabulary v;
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
            if (!line.empty()) v.add(line);
        }
        return v;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("Vocabulary: cannot write " + path);
        for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
    }

    int add(const std::string& token) {
        auto it = ids_.find(token);
        if (it != ids_.end()) return it->second;
        int id = static_cast<int>(tokens_.size());
        tokens_.push_back(token);
        ids_.emplace(token, id);
        return id;
    }

    int id(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return ids_.count(token) != 0; }

    const std::string& token(int id) const {
        if (id < 0 || id >= static_cast<int>(tokens_.size()))
            throw std::out_of_range("Vocabulary: id " + std::to_string(id));
        return tokens_[static_cast<std::size_t>(id)];
    }

    int size() const { return static_cast<int>(tokens_.size()); }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

inline std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
    return ids;
}

inline std::vector<std::string> detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.token(id));
    return out;
}

}  // namespace shakg
