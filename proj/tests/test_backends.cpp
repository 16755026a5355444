#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptcal/backend.hpp"
#include "promptcal/remote.hpp"
#include "promptcal/reward.hpp"
#include "promptcal/rng.hpp"
#include "promptcal/simulator.hpp"

using namespace promptcal;
using json = nlohmann::json;

namespace {

Query make_query(int i = 0) {
    Query q;
    q.id = "q" + std::to_string(i);
    q.question = "What modality is shown in study " + std::to_string(i) + "?";
    q.options = {"CT", "MRI", "X-ray", "PET"};
    q.truth_index = i % 4;
    return q;
}

Dataset make_dataset(int n) {
    Dataset ds;
    for (int i = 0; i < n; ++i) ds.records.push_back(make_query(i));
    return ds;
}

GenerationParams seeded(std::uint64_t seed) {
    GenerationParams p;
    p.seed = seed;
    return p;
}

}  // namespace

TEST_SUITE("backends") {

TEST_CASE("degenerate profile always parses valid and correct") {
    SimulatorProfile profile;
    profile.base_accuracy = 1.0;
    profile.invalid_rate = 0.0;
    SimulatorBackend sim(profile);
    const auto ds = make_dataset(20);
    sim.register_dataset(ds);
    const InstructionTemplate tmpl;
    for (const auto& q : ds.records) {
        const auto pred = answer_query(sim, q, std::nullopt, tmpl, seeded(fnv1a64(q.id)));
        REQUIRE(pred.is_valid());
        CHECK(pred.as_valid().answer_index == q.truth_index);
    }
}

TEST_CASE("same (profile, prompt, seed) gives byte-identical output") {
    SimulatorProfile profile;
    profile.base_accuracy = 0.6;
    profile.invalid_rate = 0.3;
    SimulatorBackend sim(profile);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto a = sim.generate("any prompt at all", std::nullopt, seeded(seed));
        const auto b = sim.generate("any prompt at all", std::nullopt, seeded(seed));
        CHECK(a == b);
    }
}

TEST_CASE("trigger phrase shifts empirical accuracy by its delta") {
    SimulatorProfile profile;
    profile.base_accuracy = 0.4;
    profile.base_conf_mean = 0.8;
    profile.invalid_rate = 0.0;
    profile.feature_effects.push_back({"calibrate carefully", 0.3, 0.0});
    SimulatorBackend sim(profile);
    const auto ds = make_dataset(16);
    sim.register_dataset(ds);
    const InstructionTemplate tmpl;
    const Cgp trigger{"calibrate carefully", CgpSource::Fixed};

    const int n = 10000;
    int correct_with = 0, correct_without = 0;
    for (int i = 0; i < n; ++i) {
        const Query& q = ds.records[static_cast<std::size_t>(i) % ds.size()];
        const auto with = answer_query(sim, q, trigger, tmpl, seeded(derive_seed(1, "mc", i)));
        const auto without =
            answer_query(sim, q, std::nullopt, tmpl, seeded(derive_seed(2, "mc", i)));
        correct_with += with.is_valid() && with.as_valid().answer_index == q.truth_index;
        correct_without +=
            without.is_valid() && without.as_valid().answer_index == q.truth_index;
    }
    const double diff = (correct_with - correct_without) / static_cast<double>(n);
    CHECK(diff == doctest::Approx(0.3).epsilon(0.075));  // 0.3 +- 0.02 expected, 3+ sigma margin
}

TEST_CASE("non-invariance: CGP changes the answer distribution") {
    SimulatorProfile profile;
    profile.base_accuracy = 0.2;
    profile.invalid_rate = 0.0;
    profile.feature_effects.push_back({"XMARK", 0.75, 0.0});
    SimulatorBackend sim(profile);
    const auto q = make_query(3);
    Dataset ds;
    ds.records.push_back(q);
    sim.register_dataset(ds);
    const InstructionTemplate tmpl;

    int same = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        const auto base = answer_query(sim, q, std::nullopt, tmpl, seeded(derive_seed(3, "ni", i)));
        const auto aug = answer_query(sim, q, Cgp{"XMARK", CgpSource::Fixed}, tmpl,
                                      seeded(derive_seed(3, "ni", i)));
        REQUIRE(base.is_valid());
        REQUIRE(aug.is_valid());
        same += base.as_valid().answer_index == aug.as_valid().answer_index;
    }
    // with a +0.75 accuracy shift the two answer streams must diverge often
    CHECK(same < n * 9 / 10);
}

TEST_CASE("orderability: expected reward ordering is stable across disjoint seed ranges") {
    SimulatorProfile profile;
    profile.base_accuracy = 0.5;
    profile.base_conf_mean = 0.95;
    profile.base_conf_spread = 0.05;
    profile.invalid_rate = 0.0;
    profile.feature_effects.push_back({"good prompt", 0.3, -0.15});
    profile.feature_effects.push_back({"bad prompt", -0.2, 0.04});
    SimulatorBackend sim(profile);
    const auto ds = make_dataset(8);
    sim.register_dataset(ds);
    const InstructionTemplate tmpl;
    const RewardConfig reward_cfg;

    auto mean_reward = [&](const std::string& cgp, std::uint64_t lo, std::uint64_t hi) {
        double total = 0.0;
        for (std::uint64_t s = lo; s < hi; ++s) {
            const Query& q = ds.records[s % ds.size()];
            const auto pred = answer_query(sim, q, Cgp{cgp, CgpSource::Fixed}, tmpl,
                                           seeded(derive_seed(4, "ord", s)));
            total += compute_reward(pred, q.truth_index, reward_cfg);
        }
        return total / static_cast<double>(hi - lo);
    };
    const double good_a = mean_reward("good prompt", 0, 1000);
    const double bad_a = mean_reward("bad prompt", 0, 1000);
    const double good_b = mean_reward("good prompt", 1000, 2000);
    const double bad_b = mean_reward("bad prompt", 1000, 2000);
    CHECK(good_a > bad_a);
    CHECK(good_b > bad_b);
}

TEST_CASE("temperature zero collapses sampling to the modal outcome") {
    SimulatorProfile profile;
    profile.base_accuracy = 0.8;
    profile.base_conf_mean = 0.7;
    profile.base_conf_spread = 0.2;
    profile.invalid_rate = 0.1;
    SimulatorBackend sim(profile);
    const auto q = make_query(5);
    Dataset ds;
    ds.records.push_back(q);
    sim.register_dataset(ds);
    const InstructionTemplate tmpl;
    GenerationParams params;
    params.temperature = 0.0;
    std::string first;
    for (std::uint64_t s = 0; s < 50; ++s) {
        params.seed = s;  // the seed must not matter at temperature 0
        const std::string out =
            sim.generate(render_downstream_prompt(q, std::nullopt, tmpl), std::nullopt, params);
        if (s == 0) first = out;
        CHECK(out == first);
    }
    const auto pred = parse_prediction(first, 4);
    REQUIRE(pred.is_valid());
    CHECK(pred.as_valid().answer_index == q.truth_index);  // 0.8 >= 0.5
    CHECK(pred.as_valid().confidence == doctest::Approx(0.7));
}

TEST_CASE("garbled output parses to Invalid, not an error") {
    SimulatorProfile profile;
    profile.invalid_rate = 1.0;
    SimulatorBackend sim(profile);
    const auto q = make_query(0);
    const InstructionTemplate tmpl;
    const auto pred = answer_query(sim, q, std::nullopt, tmpl, seeded(1));
    REQUIRE(!pred.is_valid());
    CHECK(pred.as_invalid().reason == InvalidReason::MissingAnswer);
}

TEST_CASE("profile YAML loading") {
    const auto p = simulator_profile_from_yaml(R"(
base_accuracy: 0.55
base_conf_mean: 0.92
base_conf_spread: 0.03
invalid_rate: 0.07
feature_effects:
  - { trigger_phrase: "check twice", accuracy_delta: 0.2, conf_delta: -0.1 }
)");
    CHECK(p.base_accuracy == 0.55);
    CHECK(p.invalid_rate == 0.07);
    REQUIRE(p.feature_effects.size() == 1);
    CHECK(p.feature_effects[0].trigger_phrase == "check twice");
    CHECK_THROWS_AS(simulator_profile_from_yaml("base_accuracy: 3.0"), ConfigError);
}

// -- remote client against a recording fake server ----------------------------

struct FakeServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;
    std::vector<std::string> bodies;
    std::vector<std::string> auth_headers;
    std::mutex mu;
    std::atomic<int> fail_next{0};
    std::atomic<int> status_when_failing{500};
    std::atomic<bool> reject_top_k{false};

    FakeServer() {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
            {
                std::lock_guard<std::mutex> lock(mu);
                bodies.push_back(req.body);
                auth_headers.push_back(req.get_header_value("Authorization"));
            }
            if (reject_top_k.load() && req.body.find("top_k") != std::string::npos) {
                res.status = 400;
                res.set_content(R"({"error":{"message":"unknown field: top_k"}})", "application/json");
                return;
            }
            if (fail_next.fetch_sub(1) > 0) {
                res.status = status_when_failing.load();
                res.set_content(R"({"error":{"message":"boom"}})", "application/json");
                return;
            }
            const json reply = {
                {"choices",
                 json::array({{{"message", {{"role", "assistant"},
                                            {"content", "Answer: B\nConfidence: 90"}}}}})}};
            res.set_content(reply.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~FakeServer() {
        server.stop();
        thread.join();
    }
    RemoteConfig config() const {
        RemoteConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
        cfg.model = "fake-model";
        cfg.api_key_env = "PROMPTCAL_TEST_TOKEN";
        cfg.timeout_seconds = 5;
        return cfg;
    }
};

TEST_CASE("remote client sends temperature and max_tokens exactly as configured") {
    FakeServer fake;
    setenv("PROMPTCAL_TEST_TOKEN", "sk-test-123", 1);
    RemoteBackend backend(fake.config());
    GenerationParams params;
    params.temperature = 0.6;
    params.top_k = 100;
    params.max_new_tokens = 256;

    const auto q = make_query(1);
    const InstructionTemplate tmpl;
    const auto pred = answer_query(backend, q, std::nullopt, tmpl, params);
    REQUIRE(pred.is_valid());
    CHECK(pred.as_valid().answer_index == 1);
    CHECK(pred.as_valid().confidence == doctest::Approx(0.9));

    REQUIRE(fake.bodies.size() == 1);
    const json body = json::parse(fake.bodies[0]);
    CHECK(body.at("model") == "fake-model");
    CHECK(body.at("temperature").get<double>() == 0.6);
    CHECK(body.at("max_tokens").get<int>() == 256);
    CHECK(body.at("top_k").get<int>() == 100);
    CHECK(body.at("messages").at(0).at("role") == "user");
    CHECK(fake.auth_headers[0] == "Bearer sk-test-123");
}

TEST_CASE("image refs ride as image_url content parts") {
    FakeServer fake;
    RemoteBackend backend(fake.config());
    auto q = make_query(2);
    q.image_ref = "https://example.org/scan_2.png";
    const InstructionTemplate tmpl;
    (void)answer_query(backend, q, std::nullopt, tmpl, GenerationParams{});
    const json body = json::parse(fake.bodies.at(0));
    const auto& content = body.at("messages").at(0).at("content");
    REQUIRE(content.is_array());
    CHECK(content.at(0).at("type") == "text");
    CHECK(content.at(1).at("type") == "image_url");
    CHECK(content.at(1).at("image_url").at("url") == "https://example.org/scan_2.png");
}

TEST_CASE("retry: two transient 500s then success") {
    FakeServer fake;
    fake.fail_next = 2;
    RemoteBackend backend(fake.config());
    RetryPolicy retry;
    retry.max_retries = 2;
    retry.initial_backoff_ms = 1;
    const auto q = make_query(3);
    const InstructionTemplate tmpl;
    const auto pred = answer_query(backend, q, std::nullopt, tmpl, GenerationParams{}, retry);
    CHECK(pred.is_valid());
    CHECK(fake.bodies.size() == 3);
}

TEST_CASE("retry exhaustion surfaces HttpStatusError") {
    FakeServer fake;
    fake.fail_next = 3;
    RemoteBackend backend(fake.config());
    RetryPolicy retry;
    retry.max_retries = 2;
    retry.initial_backoff_ms = 1;
    const auto q = make_query(4);
    const InstructionTemplate tmpl;
    try {
        (void)answer_query(backend, q, std::nullopt, tmpl, GenerationParams{}, retry);
        FAIL("expected HttpStatusError");
    } catch (const HttpStatusError& e) {
        CHECK(e.code == 500);
    }
    CHECK(fake.bodies.size() == 3);  // initial + 2 retries
}

TEST_CASE("4xx rejection is not retried") {
    FakeServer fake;
    fake.fail_next = 5;
    fake.status_when_failing = 422;
    RemoteBackend backend(fake.config());
    RetryPolicy retry;
    retry.max_retries = 3;
    retry.initial_backoff_ms = 1;
    const auto q = make_query(5);
    const InstructionTemplate tmpl;
    CHECK_THROWS_AS(
        (void)answer_query(backend, q, std::nullopt, tmpl, GenerationParams{}, retry),
        BackendRejection);
    CHECK(fake.bodies.size() == 1);
}

TEST_CASE("top_k probe: dropped after one rejection and kept off") {
    FakeServer fake;
    fake.reject_top_k = true;
    RemoteBackend backend(fake.config());
    const auto q = make_query(6);
    const InstructionTemplate tmpl;
    const auto pred = answer_query(backend, q, std::nullopt, tmpl, GenerationParams{});
    CHECK(pred.is_valid());
    REQUIRE(fake.bodies.size() == 2);  // probe with top_k, then without
    CHECK(fake.bodies[0].find("top_k") != std::string::npos);
    CHECK(fake.bodies[1].find("top_k") == std::string::npos);

    (void)answer_query(backend, q, std::nullopt, tmpl, GenerationParams{});
    REQUIRE(fake.bodies.size() == 3);  // no re-probe
    CHECK(fake.bodies[2].find("top_k") == std::string::npos);
}

TEST_CASE("connection refused maps to TransportError") {
    RemoteConfig cfg;
    cfg.base_url = "http://127.0.0.1:9/v1";  // discard port, nothing listens
    cfg.model = "x";
    cfg.timeout_seconds = 1;
    RemoteBackend backend(cfg);
    CHECK_THROWS_AS((void)backend.generate("hello", std::nullopt, GenerationParams{}),
                    TransportError);
}

}  // TEST_SUITE
