#include <doctest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "promptcal/parsing.hpp"
#include "promptcal/rng.hpp"

using namespace promptcal;

namespace {

Query make_query() {
    Query q;
    q.id = "q1";
    q.question = "What modality is shown?";
    q.options = {"CT", "MRI", "X-ray", "PET"};
    q.truth_index = 1;
    return q;
}

}  // namespace

TEST_SUITE("parsing") {

TEST_CASE("render: no CGP means no CGP segment") {
    const InstructionTemplate tmpl;
    const auto q = make_query();
    const std::string base = render_downstream_prompt(q, std::nullopt, tmpl);
    CHECK(base.find("Question: What modality is shown?") != std::string::npos);
    CHECK(base.find("A. CT") != std::string::npos);
    CHECK(base.find("D. PET") != std::string::npos);
    CHECK(base.find(tmpl.answer_directive) != std::string::npos);
    CHECK(base.find(tmpl.confidence_directive) != std::string::npos);

    // empty-text CGP renders byte-identically to no CGP
    const std::string with_empty =
        render_downstream_prompt(q, Cgp{"", CgpSource::Learned}, tmpl);
    CHECK(base == with_empty);
}

TEST_CASE("render: the fixed auxiliary prompt appears verbatim") {
    const InstructionTemplate tmpl;
    const auto q = make_query();
    const std::string fixed = "think step-by-step, do not be over-confident";
    const std::string prompt = render_downstream_prompt(q, Cgp{fixed, CgpSource::Fixed}, tmpl);
    CHECK(prompt.find(fixed) != std::string::npos);
}

TEST_CASE("render: purity and injectivity over distinct CGPs") {
    const InstructionTemplate tmpl;
    const auto q = make_query();
    const Cgp c1{"Be careful.", CgpSource::Learned};
    const Cgp c2{"Be bold.", CgpSource::Learned};
    CHECK(render_downstream_prompt(q, c1, tmpl) == render_downstream_prompt(q, c1, tmpl));
    CHECK(render_downstream_prompt(q, c1, tmpl) != render_downstream_prompt(q, c2, tmpl));
}

TEST_CASE("render: ordering question -> options -> cgp -> instruction") {
    const InstructionTemplate tmpl;
    const auto q = make_query();
    const std::string prompt =
        render_downstream_prompt(q, Cgp{"CGPMARK", CgpSource::Learned}, tmpl);
    const auto question_pos = prompt.find("Question:");
    const auto options_pos = prompt.find("A. CT");
    const auto cgp_pos = prompt.find("CGPMARK");
    const auto instr_pos = prompt.find(tmpl.answer_directive);
    REQUIRE(question_pos != std::string::npos);
    CHECK(question_pos < options_pos);
    CHECK(options_pos < cgp_pos);
    CHECK(cgp_pos < instr_pos);
}

TEST_CASE("instruction template validation") {
    InstructionTemplate tmpl;
    tmpl.answer_directive = "Just write something.";
    CHECK_THROWS_AS(tmpl.validate(), ConfigError);
    tmpl = InstructionTemplate{};
    tmpl.confidence_directive = "no directive";
    CHECK_THROWS_AS(tmpl.validate(), ConfigError);
    CHECK_NOTHROW(InstructionTemplate{}.validate());
}

TEST_CASE("parse: spec examples") {
    const auto p1 = parse_prediction("Answer: B\nConfidence: 90", 4);
    REQUIRE(p1.is_valid());
    CHECK(p1.as_valid().answer_index == 1);
    CHECK(p1.as_valid().confidence == doctest::Approx(0.90).epsilon(1e-12));

    const auto p2 = parse_prediction("The answer is probably right", 4);
    REQUIRE(!p2.is_valid());
    CHECK(p2.as_invalid().reason == InvalidReason::MissingAnswer);
    CHECK(p2.as_invalid().raw_text == "The answer is probably right");

    const auto p3 = parse_prediction("Answer: E, Confidence: 50", 4);
    REQUIRE(!p3.is_valid());
    CHECK(p3.as_invalid().reason == InvalidReason::OutOfRangeOption);

    const auto p4 = parse_prediction("Answer: A ... Answer: C\nConfidence: 20\nConfidence: 75", 4);
    REQUIRE(p4.is_valid());
    CHECK(p4.as_valid().answer_index == 2);
    CHECK(p4.as_valid().confidence == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("fixture corpus passes 100%") {
    std::ifstream in(std::string(TEST_DATA_DIR) + "/parse_fixtures.jsonl");
    REQUIRE(in.good());
    std::string line;
    std::size_t cases = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        ++cases;
        const auto pred = parse_prediction(j.at("raw").get<std::string>(), j.at("k").get<int>());
        const auto& expect = j.at("expect");
        INFO("fixture raw: " << j.at("raw").get<std::string>());
        if (expect.at("kind") == "valid") {
            REQUIRE(pred.is_valid());
            CHECK(pred.as_valid().answer_index == expect.at("answer_index").get<int>());
            CHECK(pred.as_valid().confidence ==
                  doctest::Approx(expect.at("confidence").get<double>()).epsilon(1e-12));
        } else {
            REQUIRE(!pred.is_valid());
            CHECK(to_string(pred.as_invalid().reason) == expect.at("reason").get<std::string>());
        }
    }
    CHECK(cases >= 60);
}

TEST_CASE("canonical formatter round-trips over the percent grid") {
    for (int k : {2, 4, 26}) {
        for (int a = 0; a < k; ++a) {
            for (int pct = 0; pct <= 100; pct += 1) {
                const Prediction::Valid v{a, static_cast<double>(pct) / 100.0};
                const auto parsed = parse_prediction(format_prediction(v), k);
                REQUIRE(parsed.is_valid());
                CHECK(parsed.as_valid().answer_index == a);
                CHECK(parsed.as_valid().confidence == v.confidence);
            }
        }
    }
}

TEST_CASE("parse is total: random byte strings never crash, confidence always in [0,1]") {
    Rng rng(20250809);
    for (int i = 0; i < 20000; ++i) {
        const std::size_t len = rng.next_below(120);
        std::string s;
        s.reserve(len);
        for (std::size_t j = 0; j < len; ++j)
            s.push_back(static_cast<char>(rng.next_below(256)));
        const auto pred = parse_prediction(s, 4);
        if (pred.is_valid()) {
            CHECK(pred.as_valid().confidence >= 0.0);
            CHECK(pred.as_valid().confidence <= 1.0);
            CHECK(pred.as_valid().answer_index >= 0);
            CHECK(pred.as_valid().answer_index < 4);
        } else {
            CHECK(pred.as_invalid().raw_text == s);
        }
    }
}

TEST_CASE("structured fuzz: marker fragments recombined never crash") {
    Rng rng(99);
    const char* frags[] = {"Answer",  ":",   "-",  "**", " ", "\n", "B",  "E",
                           "Confidence", "90",  "0.9", "%",  "101", "-5", "(", ")"};
    for (int i = 0; i < 20000; ++i) {
        std::string s;
        const std::size_t parts = 1 + rng.next_below(12);
        for (std::size_t p = 0; p < parts; ++p)
            s += frags[rng.next_below(sizeof(frags) / sizeof(frags[0]))];
        const auto pred = parse_prediction(s, 4);
        if (pred.is_valid()) {
            CHECK(pred.as_valid().confidence >= 0.0);
            CHECK(pred.as_valid().confidence <= 1.0);
        }
    }
}

}  // TEST_SUITE
