#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "shakg/env.hpp"

using namespace shakg;

namespace {

MiniEnv make_env() {
    return MiniEnv(WorldSpec::load(std::string(SHAKG_DATA_DIR) + "/miniquest.world"),
                   TemplateSet::load(std::string(SHAKG_DATA_DIR) + "/templates.txt"));
}

std::vector<std::set<std::string>> load_valid_corpus() {
    std::ifstream in(std::string(SHAKG_TEST_DATA_DIR) + "/valid_actions_walkthrough.txt");
    REQUIRE(in.good());
    std::vector<std::set<std::string>> blocks;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("state ", 0) == 0)
            blocks.emplace_back();
        else
            blocks.back().insert(line);
    }
    return blocks;
}

}  // namespace

TEST_CASE("reset puts the player in the cell with nothing") {
    auto env = make_env();
    auto obs = env.reset();
    REQUIRE(obs.room_id == "cell");
    REQUIRE(obs.inv == "You are empty-handed.");
    REQUIRE(obs.score == 0);
    REQUIRE(obs.last_action == "look");
}

TEST_CASE("two resets produce identical bundles") {
    auto env = make_env();
    auto a = env.reset();
    env.step("take key");
    auto b = env.reset();
    REQUIRE(a.desc == b.desc);
    REQUIRE(a.inv == b.inv);
    REQUIRE(a.feed == b.feed);
    REQUIRE(a.interactables == b.interactables);
}

TEST_CASE("taking the key gives feedback and reward") {
    auto env = make_env();
    env.reset();
    auto res = env.step("take key");
    REQUIRE(res.valid);
    REQUIRE(res.obs.feed == "Taken.");
    REQUIRE(res.reward == 5.0);
    REQUIRE(res.obs.inventory_items == std::vector<std::string>{"small key"});
}

TEST_CASE("nonsense actions change nothing") {
    auto env = make_env();
    env.reset();
    auto before = env.observe();
    auto res = env.step("dance wildly");
    REQUIRE_FALSE(res.valid);
    REQUIRE(res.obs.feed == kNothingHappens);
    REQUIRE(res.reward == 0.0);
    REQUIRE(res.obs.room_id == before.room_id);
    REQUIRE_FALSE(res.done);
}

TEST_CASE("the walkthrough reaches max score and terminates") {
    auto env = make_env();
    env.reset();
    double total = 0.0;
    bool done = false;
    int last_score = 0;
    for (const auto& action : env.walkthrough()) {
        auto res = env.step(action);
        REQUIRE(res.valid);
        REQUIRE(res.obs.score >= last_score);  // monotone
        last_score = res.obs.score;
        total += res.reward;
        done = res.done;
    }
    REQUIRE(total == 20.0);
    REQUIRE(env.score() == env.max_score());
    REQUIRE(done);
}

TEST_CASE("walkthrough is replay-verified and within the step limit") {
    auto env = make_env();
    auto wt = env.walkthrough();
    REQUIRE(wt.size() == 5);
    REQUIRE(wt.size() <= 100);
    auto broken = env.spec();
    broken.walkthrough_actions = {"take key", "east"};
    MiniEnv bad(broken, env.templates());
    REQUIRE_THROWS_AS(bad.walkthrough(), std::runtime_error);
}

TEST_CASE("initial valid actions contain take key and east but not take gem") {
    auto env = make_env();
    env.reset();
    auto valid = env.valid_actions();
    REQUIRE(valid.count("take key") == 1);
    REQUIRE(valid.count("east") == 1);
    REQUIRE(valid.count("take gem") == 0);
}

TEST_CASE("every reported valid action steps as valid, and the set is stable") {
    auto env = make_env();
    env.reset();
    env.step("take key");
    env.step("east");
    auto valid = env.valid_actions();
    REQUIRE(valid == env.valid_actions());
    for (const auto& action : valid) {
        MiniEnv probe = env;
        REQUIRE(probe.step(action).valid);
    }
    // and a sample of non-listed actions are invalid
    for (const auto& action : {"take gem", "open chest", "south"}) {
        REQUIRE(valid.count(action) == 0);
        MiniEnv probe = env;
        REQUIRE_FALSE(probe.step(action).valid);
    }
}

TEST_CASE("valid actions along the walkthrough match the hand-listed corpus") {
    auto env = make_env();
    env.reset();
    auto corpus = load_valid_corpus();
    auto wt = env.walkthrough();
    REQUIRE(corpus.size() == wt.size());
    for (std::size_t i = 0; i < wt.size(); ++i) {
        INFO("state " << i);
        REQUIRE(env.valid_actions() == corpus[i]);
        REQUIRE(env.step(wt[i]).valid);
    }
}

TEST_CASE("identical action sequences produce identical streams") {
    auto run = []() {
        auto env = make_env();
        env.reset();
        std::ostringstream log;
        for (const auto& a : {"take key", "east", "look", "north", "south", "unlock chest"}) {
            auto res = env.step(a);
            log << res.obs.feed << '|' << res.reward << '|' << res.valid << '\n';
        }
        return log.str();
    };
    REQUIRE(run() == run());
}

TEST_CASE("inventory text matches the empty-handed invariant") {
    auto env = make_env();
    env.reset();
    REQUIRE(env.observe().inv == "You are empty-handed.");
    env.step("take key");
    auto obs = env.observe();
    REQUIRE_FALSE(obs.inventory_items.empty());
    REQUIRE(obs.inv.rfind("You are carrying:", 0) == 0);
    env.step("drop key");
    REQUIRE(env.observe().inv == "You are empty-handed.");
}

TEST_CASE("feedback is Nothing happens exactly when the step is invalid") {
    auto env = make_env();
    env.reset();
    for (const auto& a : {"west", "take key", "take key", "east", "open chest", "unlock chest"}) {
        auto res = env.step(a);
        REQUIRE((res.obs.feed == kNothingHappens) == !res.valid);
    }
}

TEST_CASE("valid step limit terminates the episode") {
    auto env = make_env();
    env.set_valid_step_limit(3);
    env.reset();
    REQUIRE_FALSE(env.step("look").done);
    REQUIRE_FALSE(env.step("look").done);
    REQUIRE_FALSE(env.step("blargh").done);  // invalid steps do not count
    REQUIRE(env.step("look").done);
}

TEST_CASE("rewards fire once per rule") {
    auto env = make_env();
    env.reset();
    REQUIRE(env.step("take key").reward == 5.0);
    env.step("drop key");
    REQUIRE(env.step("take key").reward == 0.0);
}

TEST_CASE("two-slot actions work end to end") {
    auto env = make_env();
    env.reset();
    env.step("take key");
    env.step("east");
    REQUIRE(env.step("unlock chest with key").valid);
    REQUIRE(env.step("open chest").valid);
    auto res = env.step("put key in chest");
    REQUIRE(res.valid);
    REQUIRE(res.obs.feed == "Done.");
    REQUIRE(env.observe().inventory_items.empty());
    REQUIRE(env.step("take key").valid);  // retrievable from the open chest
}

TEST_CASE("world validation rejects dangling references") {
    std::istringstream bad("start nowhere\nroom cell|Cell|desc.\n");
    REQUIRE_THROWS_AS(WorldSpec::parse(bad), std::invalid_argument);
    std::istringstream bad2("start cell\nroom cell|Cell|desc.\nexit cell east void\n");
    REQUIRE_THROWS_AS(WorldSpec::parse(bad2), std::invalid_argument);
}

TEST_CASE("world vocabulary covers every emitted word") {
    auto env = make_env();
    auto vocab = Vocabulary::from_tokens(world_vocabulary(env.spec(), env.templates()));
    env.reset();
    std::vector<std::string> texts;
    auto absorb = [&](const ObservationBundle& o) {
        texts.push_back(o.desc);
        texts.push_back(o.inv);
        texts.push_back(o.feed);
        texts.push_back(o.last_action);
    };
    absorb(env.observe());
    for (const auto& a : env.walkthrough()) absorb(env.step(a).obs);
    for (const auto& t : texts)
        for (int id : tokenize(t, vocab)) REQUIRE(id != Vocabulary::kUnk);
}

TEST_CASE("shipped vocabulary file matches the generated vocabulary") {
    auto env = make_env();
    auto generated = world_vocabulary(env.spec(), env.templates());
    auto shipped = Vocabulary::load(std::string(SHAKG_DATA_DIR) + "/vocab.txt");
    REQUIRE(shipped.size() == static_cast<int>(generated.size()) + 2);
    for (const auto& w : generated) REQUIRE(shipped.contains(w));
}
