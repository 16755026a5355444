#include <doctest.h>

#include <cmath>

#include "promptcal/reward.hpp"
#include "promptcal/rng.hpp"

using namespace promptcal;

namespace {

Prediction valid(int answer, double conf) { return Prediction::valid(answer, conf); }
const Prediction kInvalid = Prediction::invalid("???", InvalidReason::Unparseable);

}  // namespace

TEST_SUITE("reward") {

TEST_CASE("analytic values") {
    const RewardConfig cfg;
    CHECK(compute_reward(valid(0, 1.0), 0, cfg) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(compute_reward(valid(0, 0.5), 0, cfg) ==
          doctest::Approx(-0.6931471805599453).epsilon(1e-12));
    CHECK(compute_reward(valid(1, 1.0), 0, cfg) ==
          doctest::Approx(-24.025850929940457).epsilon(1e-12));
    CHECK(compute_reward(valid(1, 0.5), 0, cfg) ==
          doctest::Approx(-1.6931471805599454).epsilon(1e-12));
    CHECK(compute_reward(kInvalid, 0, cfg) ==
          doctest::Approx(-27.631021115928547).epsilon(1e-12));
}

TEST_CASE("monotonicity in confidence") {
    const RewardConfig cfg;
    Rng rng(7);
    for (int i = 0; i < 5000; ++i) {
        double a = cfg.epsilon + rng.next_double() * (1.0 - cfg.epsilon);
        double b = cfg.epsilon + rng.next_double() * (1.0 - cfg.epsilon);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        // strictly increasing for correct
        CHECK(compute_reward(valid(0, a), 0, cfg) < compute_reward(valid(0, b), 0, cfg));
        // strictly decreasing for incorrect on [0, 1-eps]
        const double lo = std::min(a, 1.0 - cfg.epsilon);
        const double hi = std::min(b, 1.0 - cfg.epsilon);
        if (lo < hi)
            CHECK(compute_reward(valid(1, lo), 0, cfg) > compute_reward(valid(1, hi), 0, cfg));
    }
}

TEST_CASE("invalid reward is strictly below every valid reward") {
    const RewardConfig cfg;
    const double invalid_reward = compute_reward(kInvalid, 0, cfg);
    CHECK(invalid_reward == doctest::Approx(std::log(1e-12)));
    CHECK(invalid_reward < std::log(1e-10) - 1.0);  // the valid minimum
    Rng rng(8);
    for (int i = 0; i < 5000; ++i) {
        const double p = rng.next_double();
        CHECK(invalid_reward < compute_reward(valid(0, p), 0, cfg));
        CHECK(invalid_reward < compute_reward(valid(1, p), 0, cfg));
    }
}

TEST_CASE("asymmetry gap: reward(correct,p) - reward(incorrect,p) = ln p - ln(1-p) + 1") {
    const RewardConfig cfg;
    Rng rng(9);
    for (int i = 0; i < 5000; ++i) {
        const double p = 0.01 + rng.next_double() * 0.98;
        const double gap = compute_reward(valid(0, p), 0, cfg) - compute_reward(valid(1, p), 0, cfg);
        CHECK(gap == doctest::Approx(std::log(p) - std::log(1.0 - p) + 1.0).epsilon(1e-9));
    }
    const double gap_at_half =
        compute_reward(valid(0, 0.5), 0, cfg) - compute_reward(valid(1, 0.5), 0, cfg);
    CHECK(gap_at_half == doctest::Approx(cfg.incorrect_offset).epsilon(1e-12));
}

TEST_CASE("global maximum 0, attained only by confident correct predictions") {
    const RewardConfig cfg;
    CHECK(compute_reward(valid(0, 1.0), 0, cfg) == 0.0);
    Rng rng(10);
    for (int i = 0; i < 5000; ++i) {
        const double p = rng.next_double();
        CHECK(compute_reward(valid(0, p), 0, cfg) <= 0.0);
        CHECK(compute_reward(valid(1, p), 0, cfg) < 0.0);
        if (p < 1.0) CHECK(compute_reward(valid(0, p), 0, cfg) <= std::log(std::max(p, cfg.epsilon)));
    }
}

TEST_CASE("clamping handles out-of-range confidence exactly as written") {
    const RewardConfig cfg;
    CHECK(compute_reward(valid(0, 1.2), 0, cfg) == 0.0);                   // min{1, ...}
    CHECK(compute_reward(valid(0, -0.3), 0, cfg) == doctest::Approx(std::log(cfg.epsilon)));
    CHECK(compute_reward(valid(1, 1.2), 0, cfg) ==
          doctest::Approx(std::log(cfg.epsilon) - 1.0));                    // 1-p < 0 -> eps
    CHECK(compute_reward(valid(1, -0.3), 0, cfg) == doctest::Approx(-1.0)); // min{1, 1.3} -> 1
}

TEST_CASE("incorrect_offset knob shifts only the incorrect branch") {
    RewardConfig cfg;
    cfg.incorrect_offset = 2.5;
    CHECK(compute_reward(valid(1, 0.5), 0, cfg) ==
          doctest::Approx(std::log(0.5) - 2.5).epsilon(1e-12));
    CHECK(compute_reward(valid(0, 0.5), 0, cfg) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("config invariants are enforced") {
    RewardConfig bad;
    bad.epsilon_penalty = 1e-8;  // >= epsilon
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = RewardConfig{};
    bad.incorrect_offset = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = RewardConfig{};
    bad.epsilon = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_NOTHROW(RewardConfig{}.validate());
}

}  // TEST_SUITE
