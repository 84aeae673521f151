#include <doctest.h>

#include <atomic>
#include <chrono>
#include <set>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "collapse_lab/errors.hpp"
#include "collapse_lab/judge.hpp"
#include "support/mock_server.hpp"

using namespace clab;
namespace fs = std::filesystem;

namespace {

std::string golden(const std::string& name) {
    std::ifstream in(std::string(COLLAPSE_LAB_TEST_DATA) + "/golden/" + name, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string substitute(std::string tpl, const std::string& text) {
    const auto pos = tpl.find("{text}");
    return tpl.replace(pos, 6, text);
}

std::string content_of(const nlohmann::json& body) { return body["messages"][0]["content"].get<std::string>(); }

JudgeConfig config(const std::string& url) {
    JudgeConfig c;
    c.endpoint = url;
    c.model = "mock-judge";
    c.timeout_seconds = 5;
    c.max_retries = 2;
    return c;
}

fs::path temp_file(const std::string& name) {
    auto dir = fs::temp_directory_path() / "collapse_lab_judge_tests";
    fs::create_directories(dir);
    auto p = dir / name;
    fs::remove(p);
    return p;
}

} // namespace

TEST_SUITE("judge") {
    TEST_CASE("prompt templates match the golden files") {
        CHECK(std::string(kQualityPrompt) == golden("quality_prompt.txt"));
        CHECK(std::string(kLeanPrompt) == golden("lean_prompt.txt"));
        CHECK(render_prompt(JudgeKind::lean, "a post") == substitute(golden("lean_prompt.txt"), "a post"));
    }

    TEST_CASE("score parsing") {
        CHECK(parse_score(JudgeKind::quality, "85") == 85);
        CHECK(parse_score(JudgeKind::quality, " 85\n") == 85);
        CHECK(parse_score(JudgeKind::quality, "0") == 0);
        CHECK(parse_score(JudgeKind::quality, "100") == 100);
        CHECK_FALSE(parse_score(JudgeKind::quality, "101"));
        CHECK_FALSE(parse_score(JudgeKind::quality, "-1"));
        CHECK_FALSE(parse_score(JudgeKind::quality, "eighty"));
        CHECK_FALSE(parse_score(JudgeKind::quality, "85."));
        CHECK_FALSE(parse_score(JudgeKind::quality, "+85"));
        CHECK_FALSE(parse_score(JudgeKind::quality, "Score: 85"));
        CHECK_FALSE(parse_score(JudgeKind::quality, ""));
        CHECK(parse_score(JudgeKind::lean, "-1") == -1);
        CHECK(parse_score(JudgeKind::lean, "50") == 50);
        CHECK_FALSE(parse_score(JudgeKind::lean, "101"));
        CHECK_FALSE(parse_score(JudgeKind::lean, "-2"));
    }

    TEST_CASE("wire bytes and scores") {
        testing::MockChatServer server([](const nlohmann::json&) { return "85"; });
        const auto out = annotate_quality({"first post", "second post"}, config(server.url()));
        REQUIRE(out.size() == 2);
        for (const auto& o : out) {
            REQUIRE(o.ok());
            CHECK(o.annotation->score == 85);
            CHECK(o.attempts == 1);
        }
        std::set<std::string> sent;
        for (const auto& b : server.bodies()) {
            sent.insert(content_of(b));
            CHECK(b["temperature"] == 0.0);
            CHECK(b["model"] == "mock-judge");
        }
        const auto tpl = golden("quality_prompt.txt");
        CHECK(sent == std::set<std::string>{substitute(tpl, "first post"), substitute(tpl, "second post")});
    }

    TEST_CASE("unparseable responses fail per text after every attempt") {
        testing::MockChatServer server([](const nlohmann::json& b) {
            return content_of(b).find("bad post") != std::string::npos ? std::string("eighty") : std::string("70");
        });
        const auto out = annotate_quality({"good post", "bad post", "other post"}, config(server.url()));
        CHECK(out[0].ok());
        CHECK_FALSE(out[1].ok());
        CHECK(out[1].failure == JudgeFailure::parse);
        CHECK(out[1].attempts == 3);
        CHECK(out[2].annotation->score == 70);
        CHECK(server.requests() == 5);
    }

    TEST_CASE("retries recover from transient failures") {
        std::atomic<int> calls{0};
        testing::MockChatServer server([&](const nlohmann::json&) -> std::string {
            if (calls++ < 2) throw std::runtime_error("flaky");
            return "40";
        });
        auto cfg = config(server.url());
        cfg.concurrency = 1;
        const auto out = annotate_quality({"post"}, cfg);
        REQUIRE(out[0].ok());
        CHECK(out[0].attempts == 3);
        cfg.max_retries = 0;
        calls = 0;
        const auto once = annotate_quality({"another"}, cfg);
        CHECK(once[0].failure == JudgeFailure::transport);
    }

    TEST_CASE("lean range") {
        testing::MockChatServer server([](const nlohmann::json& b) {
            const auto c = content_of(b);
            if (c.find("recipe") != std::string::npos) return std::string("-1");
            if (c.find("centrist") != std::string::npos) return std::string("50");
            return std::string("101");
        });
        const auto out = annotate_lean({"a recipe", "a centrist take", "an extreme take"}, config(server.url()));
        CHECK(out[0].annotation->score == -1);
        CHECK(out[1].annotation->score == 50);
        CHECK(out[2].failure == JudgeFailure::parse);
    }

    TEST_CASE("cache serves repeats and survives a restart") {
        const auto path = temp_file("cache.jsonl");
        std::vector<std::string> texts{"alpha", "beta", "gamma"};
        std::vector<int> first;
        {
            testing::MockChatServer server([](const nlohmann::json& b) { return std::to_string(content_of(b).size() % 101); });
            auto cfg = config(server.url());
            cfg.cache_path = path.string();
            for (const auto& o : annotate_quality(texts, cfg)) first.push_back(o.annotation->score);
            CHECK(server.requests() == 3);
            const auto again = annotate_quality(texts, cfg);
            CHECK(server.requests() == 3);
            for (std::size_t i = 0; i < 3; ++i) CHECK(again[i].annotation->cached);
            // a different model misses the cache
            cfg.model = "other";
            annotate_quality({"alpha"}, cfg);
            CHECK(server.requests() == 4);
        }
        // a fresh server and a fresh process-level cache object: zero requests
        testing::MockChatServer server([](const nlohmann::json&) { return "1"; });
        auto cfg = config(server.url());
        cfg.cache_path = path.string();
        const auto replay = annotate_quality(texts, cfg);
        CHECK(server.requests() == 0);
        for (std::size_t i = 0; i < 3; ++i) CHECK(replay[i].annotation->score == first[i]);
        // the lean prompt is a different template, so it is not served from the quality entries
        annotate_lean({"alpha"}, cfg);
        CHECK(server.requests() == 1);

        // a torn last line is tolerated, a corrupt middle line is not
        { std::ofstream(path, std::ios::app) << "{\"key\": \"trunc"; }
        CHECK_NOTHROW(annotate_quality(texts, cfg));
        // and entries appended after it stay readable
        annotate_quality({"delta"}, cfg);
        const int before = server.requests();
        const auto later = annotate_quality({"delta"}, cfg);
        CHECK(server.requests() == before);
        CHECK(later[0].annotation->cached);
        {
            std::ofstream(path, std::ios::app) << "not json\n{\"key\": 1}\n";
        }
        CHECK_THROWS_AS(annotate_quality(texts, cfg), InvalidInput);
    }

    TEST_CASE("cache directories are created; unwritable caches fail on the caller") {
        testing::MockChatServer server([](const nlohmann::json&) { return "5"; });
        auto cfg = config(server.url());
        const auto dir = fs::temp_directory_path() / "collapse_lab_judge_tests" / "nested_cache_dir";
        fs::remove_all(dir);
        cfg.cache_path = (dir / "a" / "cache.jsonl").string();
        CHECK(annotate_quality({"x"}, cfg)[0].ok());
        CHECK(std::filesystem::exists(cfg.cache_path));
        cfg.cache_path = (dir / "a").string(); // a directory
        CHECK_THROWS_AS(annotate_quality({"y"}, cfg), InvalidInput);
    }

    TEST_CASE("in-flight requests never exceed the cap") {
        testing::MockChatServer server(
            [](const nlohmann::json&) {
                std::this_thread::sleep_for(std::chrono::milliseconds(30));
                return "10";
            },
            16);
        auto cfg = config(server.url());
        cfg.concurrency = 3;
        std::vector<std::string> texts;
        for (int i = 0; i < 24; ++i) texts.push_back("post " + std::to_string(i));
        const auto out = annotate_quality(texts, cfg);
        CHECK(server.max_in_flight() <= 3);
        CHECK(server.max_in_flight() >= 2);
        for (const auto& o : out) CHECK(o.ok());
    }

    TEST_CASE("config validation") {
        JudgeConfig c = config("http://127.0.0.1:1");
        c.concurrency = 0;
        CHECK_THROWS_AS(c.validate(), InvalidConfig);
        c.concurrency = 1;
        c.max_retries = -1;
        CHECK_THROWS_AS(c.validate(), InvalidConfig);
        CHECK_THROWS_AS(annotate_quality({}, config("http://x")), InvalidInput);
    }

    TEST_CASE("lean partitions and mixtures") {
        std::vector<TextRecord> rs;
        for (int lean : {-1, 0, 10, 49, 50, 51, 90, 100}) {
            auto r = human_record("lean " + std::to_string(lean));
            r.annotations.lean = lean;
            rs.push_back(r);
        }
        rs.push_back(human_record("unscored"));
        const auto p = partition_lean(rs);
        CHECK(p.left.size() == 3);
        CHECK(p.right.size() == 3);
        CHECK(p.excluded == 3);

        std::vector<TextRecord> left, right;
        for (int i = 0; i < 1000; ++i) {
            left.push_back(human_record("L" + std::to_string(i)));
            right.push_back(human_record("R" + std::to_string(i)));
        }
        auto count_left = [](const std::vector<TextRecord>& m) {
            return std::count_if(m.begin(), m.end(), [](const TextRecord& r) { return r.text[0] == 'L'; });
        };
        CHECK(count_left(build_lean_mixture(left, right, 1.0, 100, 1)) == 100);
        CHECK(count_left(build_lean_mixture(left, right, 0.5, 100, 1)) == 50);
        const auto q = build_lean_mixture(left, right, 0.25, 1000, 9);
        CHECK(count_left(q) == 250);
        CHECK(q.size() == 1000);
        CHECK(texts_of(q) == texts_of(build_lean_mixture(left, right, 0.25, 1000, 9)));
        CHECK_THROWS_AS(build_lean_mixture(left, right, 0.3, 100, 1), InvalidInput);
        CHECK_THROWS_AS(build_lean_mixture(left, right, 1.0, 1001, 1), ShortfallError);
    }
}
