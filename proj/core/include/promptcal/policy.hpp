#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "promptcal/backend.hpp"
#include "promptcal/types.hpp"

namespace promptcal {

/// The native policy's action space: an ordered library of CGP templates.
/// Templates may contain a `{question}` placeholder substituted at render time.
class PromptLibrary {
public:
    explicit PromptLibrary(std::vector<std::string> templates);

    static PromptLibrary default_library();

    std::size_t size() const { return templates_.size(); }
    const std::vector<std::string>& templates() const { return templates_; }

    /// Instantiates template `index` for `query` (placeholder substitution).
    Cgp render(std::size_t index, const Query& query) const;

    /// Stable content hash; checkpoints refuse to load against a different one.
    std::string hash() const;

private:
    std::vector<std::string> templates_;
};

/// Deterministic feature extraction from the query text: bias term, question
/// length bucket (one-hot), option count, and presence flags for a
/// configurable keyword list.
struct FeatureConfig {
    std::vector<int> length_buckets = {50, 100, 200};  // char thresholds
    std::vector<std::string> keywords = {"mri", "ct", "x-ray", "ultrasound",
                                         "pathology", "microscopy"};

    std::size_t dimension() const { return 2 + length_buckets.size() + 1 + keywords.size(); }
    std::string hash() const;
};

std::vector<double> extract_features(const Query& query, const FeatureConfig& cfg);

/// Interface shared by the trainable native policy and the frozen remote one.
class CgpPolicy {
public:
    virtual ~CgpPolicy() = default;
    /// Greedy (argmax / deterministic) CGP for a query.
    virtual Cgp greedy_cgp(const Query& query) = 0;
    /// Sampled CGP; deterministic given the seed.
    virtual Cgp sample_cgp_text(const Query& query, std::uint64_t seed) = 0;
};

struct SampledCgp {
    Cgp cgp;
    double log_prob = 0.0;  // under the current policy at temperature 1
    std::size_t action_index = 0;
};

/// Context-conditioned categorical distribution over the template library:
/// logits = W f(query), probabilities softmax(logits). Log-probabilities and
/// analytic gradients are available natively, which is what makes the GRPO
/// update exactly checkable. Weights are row-major (n_templates x feature_dim).
class SoftmaxPolicy : public CgpPolicy {
public:
    SoftmaxPolicy(PromptLibrary library, FeatureConfig features);

    std::size_t n_templates() const { return library_.size(); }
    std::size_t feature_dim() const { return features_.dimension(); }
    const PromptLibrary& library() const { return library_; }
    const FeatureConfig& feature_config() const { return features_; }

    const std::vector<double>& weights() const { return weights_; }
    std::vector<double>& mutable_weights() { return weights_; }
    const std::vector<double>& reference_weights() const { return reference_weights_; }
    void snapshot_reference() { reference_weights_ = weights_; }

    /// Logits for a feature vector, clipped to +-50 before any exponentiation
    /// so probabilities stay a valid distribution for any finite weights.
    std::vector<double> logits(const std::vector<double>& features) const;
    std::vector<double> probabilities(const std::vector<double>& features,
                                      double temperature = 1.0) const;

    /// Draws a template index from softmax(logits / temperature); the returned
    /// log-probability is under the current policy at temperature 1.
    SampledCgp sample(const Query& query, double temperature, std::uint64_t seed) const;

    double log_prob(const std::vector<double>& features, std::size_t action_index) const;

    /// Analytic grad of log pi(a|f) w.r.t. weights: row i is
    /// (1{i==a} - softmax_i) * f^T. Throws IndexError on a bad action.
    std::pair<double, std::vector<double>> log_prob_and_grad(const std::vector<double>& features,
                                                             std::size_t action_index) const;

    /// KL(current(.|f) || reference(.|f)), >= 0, 0 when weights == reference.
    double kl_to_reference(const std::vector<double>& features) const;
    /// KL value plus its gradient w.r.t. the current weights.
    std::pair<double, std::vector<double>> kl_and_grad_to_reference(
        const std::vector<double>& features) const;

    // CgpPolicy
    Cgp greedy_cgp(const Query& query) override;
    Cgp sample_cgp_text(const Query& query, std::uint64_t seed) override;

    double sample_temperature = 0.6;  // used by sample_cgp_text

    /// Versioned JSON checkpoint carrying weights, reference weights, library
    /// hash and feature-config hash. Loading refuses a hash mismatch.
    std::string save_checkpoint() const;
    void save_checkpoint_file(const std::string& path) const;
    void load_checkpoint(const std::string& json);
    void load_checkpoint_file(const std::string& path);

private:
    PromptLibrary library_;
    FeatureConfig features_;
    std::vector<double> weights_;            // row-major
    std::vector<double> reference_weights_;  // snapshot for the KL term
};

/// Frozen LLM CGP generator for inference-only use: builds a meta prompt from
/// the query text and asks a backend for the CGP. No gradients, no training.
class RemoteLlmPolicy : public CgpPolicy {
public:
    RemoteLlmPolicy(std::shared_ptr<Backend> backend, std::string meta_prompt_template,
                    GenerationParams params, std::size_t max_cgp_chars);

    Cgp greedy_cgp(const Query& query) override;
    Cgp sample_cgp_text(const Query& query, std::uint64_t seed) override;

    std::string build_meta_prompt(const Query& query) const;

private:
    std::shared_ptr<Backend> backend_;
    std::string meta_prompt_template_;
    GenerationParams params_;
    std::size_t max_cgp_chars_;
};

}  // namespace promptcal
