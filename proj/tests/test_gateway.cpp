#include <doctest.h>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "termforge/errors.hpp"
#include "termforge/gateway.hpp"

using namespace termforge;
using nlohmann::json;

namespace {

ChatRequest sample_request() {
    ChatRequest req;
    req.template_id = "quality_score";
    req.model_id = "synthesis-model";
    req.segments = {"rate this session",
                    json{{"steps", json::array({{{"command", "mkdir x"}, {"output", ""}}})}}.dump()};
    return req;
}

}  // namespace

TEST_CASE("request digest is stable and content-sensitive") {
    ChatRequest a = sample_request();
    ChatRequest b = sample_request();
    CHECK(a.digest() == b.digest());
    CHECK(a.digest().size() == 64);

    b.segments.back() += " ";
    CHECK(a.digest() != b.digest());
    ChatRequest c = sample_request();
    c.model_id = "other-model";
    CHECK(a.digest() != c.digest());
    ChatRequest d = sample_request();
    d.temperature = 0.7;
    CHECK(a.digest() != d.digest());
}

TEST_CASE("price table parses the fixture file and prices usage") {
    auto table = PriceTable::from_file(testing::fixtures_dir() / "prices.txt");
    REQUIRE(table.has("synthesis-model"));
    REQUIRE(table.has("eval-model"));
    CHECK(table.prices.at("eval-model").input_per_million == doctest::Approx(2.0));
    CHECK(table.prices.at("eval-model").output_per_million == doctest::Approx(10.0));

    UsageRecord u{"eval-model", 1000, 500, 0.0};
    CHECK(table.cost(u) == doctest::Approx(0.007));

    UsageRecord unknown{"mystery-model", 1, 1, 0.0};
    CHECK_THROWS_AS(table.cost(unknown), UnknownModelPrice);
}

TEST_CASE("account sums tokens and dollars across records") {
    PriceTable table;
    table.prices["m"] = {2.0, 10.0};
    std::vector<UsageRecord> usages = {{"m", 1000, 500, 0.0}, {"m", 2000, 1000, 0.0}};
    auto totals = account(usages, table);
    CHECK(totals.input_tokens == 3000);
    CHECK(totals.output_tokens == 1500);
    CHECK(totals.cost_usd == doctest::Approx(0.021));

    auto empty = account(std::span<const UsageRecord>{}, table);
    CHECK(empty.cost_usd == 0.0);
    CHECK(empty.input_tokens == 0);
}

TEST_CASE("record mode warms a cache that replay mode serves without a provider") {
    testing::TempDir cache;
    ChatRequest req = sample_request();

    PriceTable table;
    table.prices["synthesis-model"] = {2.0, 10.0};

    std::string recorded_text;
    {
        LlmGateway recorder(make_stub_provider(), cache, LlmMode::Record, table);
        auto resp = recorder.complete(req);
        recorded_text = resp.text;
        CHECK_FALSE(resp.cache_hit);
        CHECK(resp.usage.cost_usd > 0.0);
        CHECK(recorder.provider_calls() == 1);
        CHECK(recorder.complete_calls() == 1);
    }

    LlmGateway replayer(nullptr, cache, LlmMode::Replay, table);
    auto replayed = replayer.complete(req);
    CHECK(replayed.text == recorded_text);
    CHECK(replayed.cache_hit);
    CHECK(replayed.usage.cost_usd > 0.0);
    CHECK(replayer.provider_calls() == 0);
    CHECK(replayer.complete_calls() == 1);

    ChatRequest other = sample_request();
    other.segments.back() += "!";
    CHECK_THROWS_AS(replayer.complete(other), CacheMiss);
}

TEST_CASE("store_fixture pins replay entries directly") {
    testing::TempDir cache;
    LlmGateway gateway(nullptr, cache, LlmMode::Replay);
    ChatRequest req = sample_request();
    gateway.store_fixture(req, "pinned response", 10, 5);
    auto resp = gateway.complete(req);
    CHECK(resp.text == "pinned response");
    CHECK(resp.usage.input_tokens == 10);
    CHECK(resp.usage.output_tokens == 5);
}

TEST_CASE("stub provider quality score follows the effectful fraction") {
    auto stub = make_stub_provider();
    auto score = [&](std::vector<std::string> cmds) {
        json steps = json::array();
        for (const auto& c : cmds) steps.push_back({{"command", c}, {"output", ""}});
        ChatRequest req;
        req.template_id = "quality_score";
        req.model_id = "m";
        req.segments = {json{{"steps", steps}}.dump()};
        return stub->complete(req).text;
    };
    CHECK(score({"ls", "cat x", "pwd"}) == "0.00");
    CHECK(score({"mkdir x", "touch x/y", "rm x/y"}) == "1.00");
    // 2 of 3 effectful: 0.15 + 0.85 * 2/3 ~= 0.72.
    CHECK(score({"mkdir x", "touch y", "ls"}) == "0.72");
}

TEST_CASE("stub provider drops failed and no-op steps during extraction") {
    auto stub = make_stub_provider();
    json steps = json::array({
        {{"command", "sl"}, {"output", "bash: sl: command not found"}},
        {{"command", "clear"}, {"output", ""}},
        {{"command", "mkdir demo"}, {"output", ""}},
        {{"command", "history"}, {"output", "1 mkdir demo"}},
    });
    ChatRequest req;
    req.template_id = "extract_commands";
    req.model_id = "m";
    req.segments = {json{{"steps", steps}}.dump()};
    auto out = json::parse(stub->complete(req).text);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == "mkdir demo");
}

TEST_CASE("stub provider rejects unknown templates") {
    auto stub = make_stub_provider();
    ChatRequest req;
    req.template_id = "no_such_template";
    req.model_id = "m";
    req.segments = {"{}"};
    CHECK_THROWS_AS(stub->complete(req), GatewayError);
}

TEST_CASE("live mode without a configured provider raises a gateway error") {
    testing::TempDir cache;
    LlmGateway gateway(nullptr, cache, LlmMode::Live);
    CHECK_THROWS_AS(gateway.complete(sample_request()), GatewayError);
}
