#pragma once

// Flat key=value run configuration with '#' comments. Flags override file
// values; the effective config is echoed into the output directory.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace shakg {

struct RunConfig {
    std::string world_path;
    std::string template_path;
    std::string vocab_path;
    std::string out_dir = "runs/default";

    int num_envs = 32;
    int steps_per_update = 8;
    int episode_valid_step_limit = 100;
    int episode_raw_step_limit = 400;
    long total_steps = 50000;
    double gamma = 0.9;
    double lr = 0.003;
    double lambda_critic = 0.5;
    double lambda_entropy = 0.01;
    double lambda_template = 1.0;
    double lambda_object = 1.0;
    std::string variant = "full";
    std::string strategy = "full";
    std::uint64_t seed = 1;
    long checkpoint_interval = 0;  // updates between checkpoints; 0 = final only
    bool trace = false;

    void set(const std::string& key, const std::string& value) {
        try {
            if (key == "world") world_path = value;
            else if (key == "templates") template_path = value;
            else if (key == "vocab") vocab_path = value;
            else if (key == "out") out_dir = value;
            else if (key == "num_envs") num_envs = std::stoi(value);
            else if (key == "steps_per_update") steps_per_update = std::stoi(value);
            else if (key == "episode_valid_step_limit") episode_valid_step_limit = std::stoi(value);
            else if (key == "episode_raw_step_limit") episode_raw_step_limit = std::stoi(value);
            else if (key == "total_steps") total_steps = std::stol(value);
            else if (key == "gamma") gamma = std::stod(value);
            else if (key == "lr") lr = std::stod(value);
            else if (key == "lambda_critic") lambda_critic = std::stod(value);
            else if (key == "lambda_entropy") lambda_entropy = std::stod(value);
            else if (key == "lambda_template") lambda_template = std::stod(value);
            else if (key == "lambda_object") lambda_object = std::stod(value);
            else if (key == "variant") variant = value;
            else if (key == "strategy") strategy = value;
            else if (key == "seed") seed = std::stoull(value);
            else if (key == "checkpoint_interval") checkpoint_interval = std::stol(value);
            else if (key == "trace") trace = (value == "1" || value == "true");
            else throw std::invalid_argument("config: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("config: bad value '" + value + "' for key '" + key + "'");
        }
    }

    void validate() const {
        if (num_envs <= 0 || steps_per_update <= 0 || episode_valid_step_limit <= 0 ||
            total_steps <= 0)
            throw std::invalid_argument("config: counts must be positive");
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw std::invalid_argument("config: gamma must be in (0, 1]");
    }

    std::string to_string() const {
        std::ostringstream out;
        out.precision(17);
        out << "world=" << world_path << '\n'
            << "templates=" << template_path << '\n'
            << "vocab=" << vocab_path << '\n'
            << "num_envs=" << num_envs << '\n'
            << "steps_per_update=" << steps_per_update << '\n'
            << "episode_valid_step_limit=" << episode_valid_step_limit << '\n'
            << "episode_raw_step_limit=" << episode_raw_step_limit << '\n'
            << "total_steps=" << total_steps << '\n'
            << "gamma=" << gamma << '\n'
            << "lr=" << lr << '\n'
            << "lambda_critic=" << lambda_critic << '\n'
            << "lambda_entropy=" << lambda_entropy << '\n'
            << "lambda_template=" << lambda_template << '\n'
            << "lambda_object=" << lambda_object << '\n'
            << "variant=" << variant << '\n'
            << "strategy=" << strategy << '\n'
            << "seed=" << seed << '\n'
            << "checkpoint_interval=" << checkpoint_interval << '\n'
            << "trace=" << (trace ? 1 : 0) << '\n';
        return out.str();
    }
};

inline void parse_config_stream(std::istream& in, RunConfig& cfg) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
            line.pop_back();
        std::size_t start = 0;
        while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
        if (start >= line.size()) continue;
        auto eq = line.find('=', start);
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value");
        std::string key = line.substr(start, eq - start);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
        while (!value.empty() && std::isspace(static_cast<unsigned char>(value.front())))
            value.erase(value.begin());
        cfg.set(key, value);
    }
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    RunConfig cfg;
    parse_config_stream(in, cfg);
    return cfg;
}

}  // namespace shakg
