#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "promptcal/policy.hpp"
#include "promptcal/rng.hpp"

using namespace promptcal;

namespace {

Query make_query(const std::string& question = "What modality is shown in this MRI study?") {
    Query q;
    q.id = "q1";
    q.question = question;
    q.options = {"CT", "MRI", "X-ray", "PET"};
    q.truth_index = 1;
    return q;
}

SoftmaxPolicy make_policy(std::size_t n_templates = 4) {
    std::vector<std::string> templates;
    for (std::size_t i = 0; i < n_templates; ++i)
        templates.push_back("Template " + std::to_string(i) + ".");
    FeatureConfig features;
    features.length_buckets = {50, 100};
    features.keywords = {"mri", "ct"};
    return SoftmaxPolicy(PromptLibrary(std::move(templates)), features);
}

void randomize_weights(SoftmaxPolicy& policy, Rng& rng, double scale = 1.0) {
    for (double& w : policy.mutable_weights()) w = (rng.next_double() * 2.0 - 1.0) * scale;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("library: validation and placeholder rendering") {
    CHECK_THROWS_AS(PromptLibrary({"only one"}), ConfigError);
    CHECK_THROWS_AS(PromptLibrary({"dup", "dup"}), ConfigError);

    const auto lib = PromptLibrary::default_library();
    CHECK(lib.size() == 8);
    const auto q = make_query("Is this a fracture?");
    bool found_substitution = false;
    for (std::size_t i = 0; i < lib.size(); ++i) {
        const Cgp cgp = lib.render(i, q);
        CHECK(cgp.source_tag == CgpSource::Learned);
        CHECK(cgp.text.find("{question}") == std::string::npos);
        if (cgp.text.find("Is this a fracture?") != std::string::npos) found_substitution = true;
    }
    CHECK(found_substitution);
    CHECK_THROWS_AS(lib.render(lib.size(), q), IndexError);
}

TEST_CASE("library hash is content-sensitive") {
    const PromptLibrary a({"x", "y"});
    const PromptLibrary b({"x", "y"});
    const PromptLibrary c({"x", "z"});
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != c.hash());
}

TEST_CASE("feature extraction is deterministic with the documented layout") {
    FeatureConfig cfg;
    cfg.length_buckets = {10, 20};
    cfg.keywords = {"mri", "pet"};
    const auto q = make_query("short q");  // 7 chars -> bucket 0
    const auto f = extract_features(q, cfg);
    REQUIRE(f.size() == cfg.dimension());
    CHECK(f[0] == 1.0);               // bias
    CHECK(f[1] == 1.0);               // bucket 0
    CHECK(f[2] == 0.0);
    CHECK(f[3] == 0.0);
    CHECK(f[4] == doctest::Approx(0.5));  // 4 options / 8
    CHECK(f[5] == 1.0);               // "mri" appears in options
    CHECK(f[6] == 1.0);               // "pet"
    CHECK(extract_features(q, cfg) == f);
}

TEST_CASE("uniform policy samples each template near 1/n") {
    auto policy = make_policy(4);
    const auto q = make_query();
    const int draws = 10000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < draws; ++i)
        ++counts[policy.sample(q, 1.0, derive_seed(1, "sample", i)).action_index];
    // 3 sigma around n/4 with sigma = sqrt(n p (1-p))
    const double sigma = std::sqrt(draws * 0.25 * 0.75);
    for (int c : counts) CHECK(std::fabs(c - draws / 4.0) < 3.0 * sigma + 1.0);
}

TEST_CASE("saturated logit dominates sampling") {
    auto policy = make_policy(3);
    const auto q = make_query();
    const auto f = extract_features(q, policy.feature_config());
    // put +20 on template 1's bias weight
    policy.mutable_weights()[1 * policy.feature_dim() + 0] = 20.0;
    int hits = 0;
    const int draws = 20000;
    for (int i = 0; i < draws; ++i)
        hits += policy.sample(q, 1.0, derive_seed(2, "sat", i)).action_index == 1;
    CHECK(static_cast<double>(hits) / draws > 0.999);
    const auto p = policy.probabilities(f);
    CHECK(p[1] > 0.999);
}

TEST_CASE("sampled log_prob equals log softmax at temperature 1") {
    Rng rng(33);
    auto policy = make_policy(5);
    randomize_weights(policy, rng);
    const auto q = make_query();
    const auto f = extract_features(q, policy.feature_config());
    const auto p = policy.probabilities(f, 1.0);
    for (int i = 0; i < 50; ++i) {
        const auto s = policy.sample(q, 0.6, derive_seed(3, "lp", i));
        CHECK(s.log_prob == doctest::Approx(std::log(p[s.action_index])).epsilon(1e-12));
    }
}

TEST_CASE("probabilities are a valid distribution for wild weights") {
    auto policy = make_policy(4);
    const auto q = make_query();
    const auto f = extract_features(q, policy.feature_config());
    Rng rng(44);
    for (int trial = 0; trial < 100; ++trial) {
        randomize_weights(policy, rng, 1e6);  // logit clip must keep this finite
        const auto p = policy.probabilities(f);
        double sum = 0.0;
        for (double v : p) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("gradient matches central finite differences") {
    Rng rng(55);
    auto policy = make_policy(4);
    const auto q = make_query();
    const auto f = extract_features(q, policy.feature_config());
    for (int trial = 0; trial < 30; ++trial) {
        randomize_weights(policy, rng);
        const std::size_t action = rng.next_below(4);
        const auto [lp, grad] = policy.log_prob_and_grad(f, action);
        CHECK(lp == doctest::Approx(oracle::log_prob_ref(policy.weights(), f, 4, action))
                        .epsilon(1e-10));
        const auto fd = oracle::fd_log_prob_grad(policy.weights(), f, 4, action, 1e-5);
        double max_err = 0.0;
        for (std::size_t j = 0; j < grad.size(); ++j)
            max_err = std::max(max_err, std::fabs(grad[j] - fd[j]));
        CHECK(max_err < 1e-6);
    }
}

TEST_CASE("score-function identity: sum_a pi(a) grad log pi(a) = 0") {
    Rng rng(66);
    auto policy = make_policy(5);
    const auto q = make_query();
    const auto f = extract_features(q, policy.feature_config());
    for (int trial = 0; trial < 20; ++trial) {
        randomize_weights(policy, rng);
        const auto p = policy.probabilities(f);
        std::vector<double> mix(policy.weights().size(), 0.0);
        for (std::size_t a = 0; a < 5; ++a) {
            const auto [lp, grad] = policy.log_prob_and_grad(f, a);
            for (std::size_t j = 0; j < mix.size(); ++j) mix[j] += p[a] * grad[j];
        }
        for (double v : mix) CHECK(std::fabs(v) < 1e-9);
    }
}

TEST_CASE("uniform two-template policy with bias-only feature: grad rows are +-0.5") {
    FeatureConfig features;
    features.length_buckets = {};
    features.keywords = {};
    // dimension = bias + 1 length bucket + option count: use the bias row only
    SoftmaxPolicy policy(PromptLibrary({"a", "b"}), features);
    const auto q = make_query();
    const auto f = extract_features(q, policy.feature_config());
    const auto [lp, grad] = policy.log_prob_and_grad(f, 0);
    CHECK(lp == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    const std::size_t d = policy.feature_dim();
    // bias column: (1 - 0.5) * 1 and (0 - 0.5) * 1
    CHECK(grad[0 * d + 0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(grad[1 * d + 0] == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("KL: zero at reference, non-negative, matches direct summation") {
    Rng rng(77);
    auto policy = make_policy(4);
    const auto q = make_query();
    const auto f = extract_features(q, policy.feature_config());
    CHECK(policy.kl_to_reference(f) == 0.0);

    for (int trial = 0; trial < 50; ++trial) {
        randomize_weights(policy, rng);
        const double kl = policy.kl_to_reference(f);
        CHECK(kl >= 0.0);
        const double ref = oracle::kl_bruteforce(policy.weights(), policy.reference_weights(), f, 4);
        CHECK(kl == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("KL gradient matches finite differences") {
    Rng rng(88);
    auto policy = make_policy(3);
    const auto q = make_query();
    const auto f = extract_features(q, policy.feature_config());
    randomize_weights(policy, rng);
    policy.snapshot_reference();
    randomize_weights(policy, rng);

    const auto [kl, grad] = policy.kl_and_grad_to_reference(f);
    auto w = policy.weights();
    const double h = 1e-6;
    for (std::size_t j = 0; j < w.size(); ++j) {
        const double orig = w[j];
        auto probe = [&](double val) {
            w[j] = val;
            return oracle::kl_bruteforce(w, policy.reference_weights(), f, 3);
        };
        const double fd = (probe(orig + h) - probe(orig - h)) / (2.0 * h);
        w[j] = orig;
        CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
    (void)kl;
}

TEST_CASE("sampling frequencies pass a chi-square test against the softmax") {
    Rng rng(99);
    auto policy = make_policy(8);
    randomize_weights(policy, rng, 0.7);
    const auto q = make_query();
    const auto f = extract_features(q, policy.feature_config());
    const auto p = policy.probabilities(f);

    const int n = 100000;
    std::vector<int> counts(8, 0);
    for (int i = 0; i < n; ++i)
        ++counts[policy.sample(q, 1.0, derive_seed(4, "chi", i)).action_index];
    double chi2 = 0.0;
    for (std::size_t a = 0; a < 8; ++a) {
        const double expected = n * p[a];
        chi2 += (counts[a] - expected) * (counts[a] - expected) / expected;
    }
    CHECK(chi2 < 24.3219);  // chi-square 0.999 quantile, 7 dof
}

TEST_CASE("greedy selection is the argmax and ties break to the lowest index") {
    auto policy = make_policy(3);
    const auto q = make_query();
    CHECK(policy.greedy_cgp(q).text == "Template 0.");
    policy.mutable_weights()[2 * policy.feature_dim()] = 1.0;
    CHECK(policy.greedy_cgp(q).text == "Template 2.");
}

TEST_CASE("checkpoint round-trips to bit-identical behavior") {
    Rng rng(111);
    auto policy = make_policy(4);
    randomize_weights(policy, rng);
    policy.snapshot_reference();
    randomize_weights(policy, rng);
    const std::string saved = policy.save_checkpoint();

    auto restored = make_policy(4);
    restored.load_checkpoint(saved);
    CHECK(restored.weights() == policy.weights());
    CHECK(restored.reference_weights() == policy.reference_weights());

    const auto q = make_query();
    for (int i = 0; i < 20; ++i) {
        const auto a = policy.sample(q, 0.6, derive_seed(5, "ckpt", i));
        const auto b = restored.sample(q, 0.6, derive_seed(5, "ckpt", i));
        CHECK(a.action_index == b.action_index);
        CHECK(a.log_prob == b.log_prob);
        CHECK(a.cgp.text == b.cgp.text);
    }
}

TEST_CASE("checkpoint refuses a mismatched library or feature config") {
    auto policy = make_policy(4);
    const std::string saved = policy.save_checkpoint();

    SoftmaxPolicy other(PromptLibrary({"different", "library"}), policy.feature_config());
    CHECK_THROWS_AS(other.load_checkpoint(saved), ChecksumError);

    FeatureConfig other_features;
    other_features.keywords = {"totally", "different"};
    std::vector<std::string> templates;
    for (std::size_t i = 0; i < 4; ++i) templates.push_back("Template " + std::to_string(i) + ".");
    SoftmaxPolicy other2(PromptLibrary(templates), other_features);
    CHECK_THROWS_AS(other2.load_checkpoint(saved), ChecksumError);
}

TEST_CASE("index errors on bad actions") {
    auto policy = make_policy(3);
    const auto q = make_query();
    const auto f = extract_features(q, policy.feature_config());
    CHECK_THROWS_AS(policy.log_prob_and_grad(f, 3), IndexError);
    CHECK_THROWS_AS((void)policy.log_prob(f, 7), IndexError);
}

}  // TEST_SUITE
