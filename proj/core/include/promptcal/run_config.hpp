#pragma once

#include <memory>
#include <string>
#include <vector>

#include "promptcal/backend.hpp"
#include "promptcal/baselines.hpp"
#include "promptcal/grpo.hpp"
#include "promptcal/policy.hpp"
#include "promptcal/remote.hpp"
#include "promptcal/reward.hpp"
#include "promptcal/simulator.hpp"

namespace promptcal {

struct DataSplitConfig {
    std::string path;
    std::size_t size = 0;  // 0 = use every record
};

struct DataConfig {
    DataSplitConfig train{"", 5000};
    DataSplitConfig val{"", 1000};
    DataSplitConfig test{"", 0};
    std::uint64_t seed = 7;
};

struct BackendSection {
    enum class Kind { Simulator, Remote };
    Kind kind = Kind::Simulator;
    std::string profile_path;  // optional; overrides the inline profile
    SimulatorProfile profile;
    RemoteConfig remote;
};

struct LimitsConfig {
    int max_prompt_tokens = 512;
    int max_completion_tokens = 256;
    // The harness is tokenizer-agnostic; budgets are approximated at 4 chars per token.
    std::size_t max_cgp_chars() const { return 4u * static_cast<std::size_t>(max_completion_tokens); }
    std::size_t max_prompt_chars() const { return 4u * static_cast<std::size_t>(max_prompt_tokens); }
};

struct PolicySection {
    enum class Kind { Native, Remote };
    Kind kind = Kind::Native;
    std::vector<std::string> templates;  // empty = default library
    FeatureConfig features;
    double sample_temperature = 0.6;
    RemoteConfig remote;  // for kind == Remote (frozen LLM generator)
    std::string meta_prompt;
};

struct MetricsSection {
    int n_bins = 10;
    double conf_threshold = 0.85;
};

struct RunConfig {
    std::string output_dir = "runs/run";
    std::uint64_t seed = 12345;
    DataConfig data;
    BackendSection backend;
    InstructionTemplate instruction;
    GenerationParams generation;
    LimitsConfig limits;
    PolicySection policy;
    GrpoConfig grpo;
    BaselineSpec baseline;
    MetricsSection metrics;
    RewardConfig reward;
    RetryPolicy retry;
    std::string source_text;  // raw config document, copied to config.snapshot

    void validate() const;
};

RunConfig default_run_config();

/// The fully commented default config document emitted by `config init`.
std::string default_config_yaml();

RunConfig run_config_from_yaml(const std::string& yaml);

/// Parses and additionally checks that every referenced file exists.
RunConfig load_run_config(const std::string& path);

// Builders wiring config sections into live objects.
std::shared_ptr<Backend> make_backend(const RunConfig& cfg,
                                      const std::vector<const Dataset*>& register_truth = {});
std::unique_ptr<SoftmaxPolicy> make_native_policy(const RunConfig& cfg);
std::unique_ptr<CgpPolicy> make_cgp_policy(const RunConfig& cfg);

/// Loads the configured split, applying the deterministic subsample when a
/// size is set. When train and val share one path their samples are carved
/// disjointly from a single draw.
Dataset load_split(const RunConfig& cfg, Split split);

}  // namespace promptcal
