// Command-line entry point: training, greedy evaluation, and step tracing.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "shakg/checkpoint.hpp"
#include "shakg/config.hpp"
#include "shakg/model.hpp"
#include "shakg/trace.hpp"
#include "shakg/trainer.hpp"

namespace fs = std::filesystem;
using namespace shakg;

namespace {

struct Bundle {
    std::shared_ptr<const WorldSpec> world;
    std::shared_ptr<const TemplateSet> templates;
    std::shared_ptr<const Vocabulary> vocab;
    std::shared_ptr<ShaKgModel> model;
};

Bundle build_bundle(const RunConfig& cfg) {
    Bundle b;
    b.world = std::make_shared<const WorldSpec>(WorldSpec::load(cfg.world_path));
    b.templates = std::make_shared<const TemplateSet>(TemplateSet::load(cfg.template_path));
    b.vocab = std::make_shared<const Vocabulary>(Vocabulary::load(cfg.vocab_path));
    ModelConfig mc;
    mc.variant = parse_variant(cfg.variant);
    mc.strategy = parse_strategy(cfg.strategy);
    b.model = std::make_shared<ShaKgModel>(b.vocab, b.templates, mc, cfg.seed);
    return b;
}

MiniEnv make_env(const Bundle& b, const RunConfig& cfg) {
    MiniEnv env(b.world, b.templates);
    env.set_valid_step_limit(cfg.episode_valid_step_limit);
    env.set_raw_step_limit(cfg.episode_raw_step_limit);
    return env;
}

void write_trace_file(const Bundle& b, const RunConfig& cfg, const std::string& path,
                      const std::string& aggregation, int max_steps, bool with_nodes) {
    std::vector<std::string> methods = aggregation_methods();
    if (!aggregation.empty() && aggregation != "all") {
        if (std::find(methods.begin(), methods.end(), aggregation) == methods.end())
            throw std::invalid_argument("trace: unknown aggregation '" + aggregation + "'");
        methods = {aggregation};
    }
    MiniEnv env = make_env(b, cfg);
    if (max_steps > 0)
        env.set_raw_step_limit(std::min(max_steps, cfg.episode_raw_step_limit > 0
                                                       ? cfg.episode_raw_step_limit
                                                       : max_steps));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("trace: cannot write " + path);
    write_episode_trace(*b.model, env, out, methods, with_nodes);
}

int cmd_train(const std::string& config_path, const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg;
    try {
        cfg = load_config(config_path);
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error (" << config_path << "): " << e.what() << '\n';
        return 1;
    }

    Bundle b;
    std::ofstream metrics;
    try {
        b = build_bundle(cfg);
        fs::create_directories(cfg.out_dir);
        std::ofstream echo(fs::path(cfg.out_dir) / "effective.cfg");
        echo << "out=" << cfg.out_dir << '\n' << cfg.to_string();
        metrics.open(fs::path(cfg.out_dir) / "metrics.csv");
        metrics << "episode,step,raw_score,avg100\n" << std::setprecision(12);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    }

    try {
        Trainer trainer(b.model, b.world, cfg);
        const std::string config_text = cfg.to_string();
        trainer.run(
            [&](long episode, long step, double score, double avg100) {
                metrics << episode << ',' << step << ',' << score << ',' << avg100 << '\n';
            },
            [&](long updates, bool final_checkpoint) {
                const std::string name =
                    final_checkpoint ? "checkpoint.bin"
                                     : "checkpoint_" + std::to_string(updates) + ".bin";
                save_checkpoint(b.model->store(), (fs::path(cfg.out_dir) / name).string(),
                                config_text);
            });
        metrics.flush();
        if (cfg.trace)
            write_trace_file(b, cfg, (fs::path(cfg.out_dir) / "trace.txt").string(), "all", 0,
                             false);
    } catch (const std::exception& e) {
        std::cerr << "training fault: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

struct LoadedModel {
    RunConfig cfg;
    Bundle bundle;
};

LoadedModel load_model(const std::string& checkpoint_path,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
    auto data = load_checkpoint(checkpoint_path);
    LoadedModel lm;
    std::istringstream cfg_in(data.config_text);
    parse_config_stream(cfg_in, lm.cfg);
    for (const auto& [k, v] : overrides) lm.cfg.set(k, v);
    lm.bundle = build_bundle(lm.cfg);
    apply_checkpoint(lm.bundle.model->store(), data);
    return lm;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SHA-KG agent for text-based games"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_path, aggregation = "all";
    std::vector<std::pair<std::string, std::string>> overrides;
    int episodes = 10;
    int max_steps = 0;
    bool with_nodes = false;
    std::uint64_t seed_flag = 0;
    bool seed_set = false, steps_set = false, out_set = false, variant_set = false,
         strategy_set = false;
    long steps_flag = 0;
    std::string out_flag, variant_flag, strategy_flag;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed_flag)->each([&](const std::string&) { seed_set = true; });
    };

    auto* train = app.add_subcommand("train", "train an agent");
    train->add_option("--config", config_path, "config file")->required();
    add_common(train);
    train->add_option("--steps", steps_flag)->each([&](const std::string&) { steps_set = true; });
    train->add_option("--out", out_flag)->each([&](const std::string&) { out_set = true; });
    train->add_option("--variant", variant_flag)->each([&](const std::string&) { variant_set = true; });
    train->add_option("--strategy", strategy_flag)
        ->each([&](const std::string&) { strategy_set = true; });

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint greedily");
    eval->add_option("--checkpoint", checkpoint_path)->required();
    eval->add_option("--episodes", episodes);
    add_common(eval);

    auto* trace = app.add_subcommand("trace", "trace one greedy episode");
    trace->add_option("--checkpoint", checkpoint_path)->required();
    trace->add_option("--out", out_path)->required();
    trace->add_option("--aggregation", aggregation, "attention aggregation method or 'all'");
    trace->add_option("--max-steps", max_steps, "cap on traced steps (0 = episode end)");
    trace->add_flag("--nodes", with_nodes, "append per-sub-graph top attended nodes");
    add_common(trace);

    CLI11_PARSE(app, argc, argv);

    auto collect_overrides = [&]() {
        std::vector<std::pair<std::string, std::string>> o;
        if (seed_set) o.emplace_back("seed", std::to_string(seed_flag));
        if (steps_set) o.emplace_back("total_steps", std::to_string(steps_flag));
        if (out_set) o.emplace_back("out", out_flag);
        if (variant_set) o.emplace_back("variant", variant_flag);
        if (strategy_set) o.emplace_back("strategy", strategy_flag);
        return o;
    };

    if (train->parsed()) return cmd_train(config_path, collect_overrides());

    if (eval->parsed()) {
        try {
            auto lm = load_model(checkpoint_path, collect_overrides());
            MiniEnv env = make_env(lm.bundle, lm.cfg);
            double mean = evaluate_model(*lm.bundle.model, env, episodes);
            std::cout << std::fixed << std::setprecision(1) << mean << '\n';
            return 0;
        } catch (const std::exception& e) {
            std::cerr << "eval error: " << e.what() << '\n';
            return 1;
        }
    }

    if (trace->parsed()) {
        try {
            auto lm = load_model(checkpoint_path, collect_overrides());
            write_trace_file(lm.bundle, lm.cfg, out_path, aggregation, max_steps, with_nodes);
            return 0;
        } catch (const std::exception& e) {
            std::cerr << "trace error: " << e.what() << '\n';
            return 1;
        }
    }
    return 1;
}
