#pragma once

// Versioned binary checkpoints: header (magic, version, config hash, seed),
// the effective config text, then named parameter records as row-major
// little-endian 64-bit floats.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shakg/params.hpp"

namespace shakg {

constexpr char kCheckpointMagic[8] = {'S', 'H', 'A', 'K', 'G', 'C', 'P', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace detail {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace detail

struct CheckpointData {
    std::string config_text;
    std::uint64_t seed = 0;
    std::vector<std::tuple<std::string, std::uint32_t, std::uint32_t, std::vector<double>>> params;
};

inline void save_checkpoint(const ParameterStore& store, const std::string& path,
                            const std::string& config_text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    detail::put<std::uint64_t>(out, fnv1a64(config_text));
    detail::put<std::uint64_t>(out, store.rng_seed());
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(config_text.size()));
    out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.items().size()));
    for (const auto& [name, t] : store.items()) {
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rows));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t->cols));
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const auto version = detail::take<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const auto hash = detail::take<std::uint64_t>(in);
    CheckpointData data;
    data.seed = detail::take<std::uint64_t>(in);
    const auto cfg_len = detail::take<std::uint32_t>(in);
    data.config_text.resize(cfg_len);
    in.read(data.config_text.data(), cfg_len);
    if (!in) throw std::runtime_error("checkpoint: truncated config in " + path);
    if (fnv1a64(data.config_text) != hash)
        throw std::runtime_error("checkpoint: config hash mismatch in " + path);
    const auto n = detail::take<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto name_len = detail::take<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rows = detail::take<std::uint32_t>(in);
        const auto cols = detail::take<std::uint32_t>(in);
        std::vector<double> values(static_cast<std::size_t>(rows) * cols);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated data in " + path);
        data.params.emplace_back(std::move(name), rows, cols, std::move(values));
    }
    return data;
}

// Every store parameter must be present with a matching shape.
inline void apply_checkpoint(ParameterStore& store, const CheckpointData& data) {
    std::size_t applied = 0;
    for (const auto& [name, rows, cols, values] : data.params) {
        if (!store.has(name))
            throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
        auto t = store.get(name);
        if (t->rows != rows || t->cols != cols)
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        t->data = values;
        ++applied;
    }
    if (applied != store.items().size())
        throw std::runtime_error("checkpoint: file has " + std::to_string(applied) +
                                 " parameters, model needs " +
                                 std::to_string(store.items().size()));
}

}  // namespace shakg
