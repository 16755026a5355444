#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "promptcal/backend.hpp"
#include "promptcal/metrics.hpp"
#include "promptcal/policy.hpp"
#include "promptcal/reward.hpp"
#include "promptcal/types.hpp"

namespace promptcal {

struct GrpoConfig {
    std::size_t group_size = 8;       // G: candidate completions per query
    double beta = 0.04;               // KL penalty weight
    double clip_epsilon = 0.2;        // ratio clip range
    double learning_rate = 1e-2;      // native softmax-policy step (LLM-scale runs use 1e-6)
    std::size_t inner_iterations = 4; // mu: optimization passes per collected batch
    std::size_t batch_queries = 8;
    std::size_t max_steps = 200;
    std::size_t eval_every = 0;  // 0 = no mid-run eval
    std::uint64_t seed = 0;
    bool normalize_std = false;               // ablation only; default is mean-centering
    std::size_t reference_refresh_every = 0;  // 0 = reference stays the initial snapshot
    enum class Optimizer { Sgd, Adam };
    Optimizer optimizer = Optimizer::Sgd;
    double weight_decay = 0.0;  // decoupled
    std::size_t group_retry_budget = 3;
    int max_workers = 8;

    void validate() const;
};

struct RolloutSample {
    std::size_t action_index = 0;
    Cgp cgp;
    double log_prob_old = 0.0;  // recorded at sampling time
    Prediction prediction = Prediction::invalid("", InvalidReason::Unparseable);
    double reward = 0.0;
    double advantage = 0.0;
};

/// G samples sharing one query; the advantage unit. Advantages sum to zero
/// within each group. Invalid predictions stay in the group — the format
/// penalty must flow into the advantages.
struct RolloutGroup {
    std::string query_id;
    std::vector<double> features;
    std::vector<RolloutSample> samples;
};

/// a_i = r_i - mean(r); with normalize_std also divided by the population
/// standard deviation (floored at 1e-8). Throws SizeError for fewer than 2.
std::vector<double> compute_advantages(const std::vector<double>& rewards,
                                       bool normalize_std = false);

/// Samples G CGPs from the current policy, queries the downstream backend once
/// per CGP, parses and scores. A transport-level failure discards the whole
/// group and re-collects it (fresh derived seeds) up to the retry budget.
RolloutGroup collect_group(const SoftmaxPolicy& policy, const Query& query, Backend& downstream,
                           const InstructionTemplate& tmpl, const GenerationParams& params,
                           const RewardConfig& reward_cfg, const GrpoConfig& cfg,
                           std::uint64_t group_seed, const RetryPolicy& retry = {});

struct UpdateStats {
    double mean_reward = 0.0;
    double mean_kl = 0.0;        // averaged over inner iterations
    double clip_fraction = 0.0;  // averaged over inner iterations
    double loss = 0.0;           // negative objective at the last inner iteration
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// mu inner iterations of the clipped-ratio surrogate with KL penalty:
/// mean over samples of min(rho * a, clip(rho, 1-eps, 1+eps) * a) - beta * KL,
/// ascended by plain gradient ascent (or Adam when configured).
/// Throws DivergenceError on a non-finite objective.
UpdateStats grpo_step(SoftmaxPolicy& policy, const std::vector<RolloutGroup>& groups,
                      const GrpoConfig& cfg, AdamState* adam = nullptr);

struct RewardCurvePoint {
    std::size_t step = 0;
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double clip_fraction = 0.0;
};

struct TrainingArtifacts {
    std::string run_dir;
    std::string checkpoint_path;
    std::vector<RewardCurvePoint> reward_curve;
    std::vector<std::pair<std::size_t, CalibrationReport>> eval_reports;
};

struct TrainSetup {
    SoftmaxPolicy* policy = nullptr;
    Backend* downstream = nullptr;
    const Dataset* train_data = nullptr;
    const Dataset* val_data = nullptr;  // required when grpo.eval_every > 0
    InstructionTemplate tmpl;
    GenerationParams params;
    RewardConfig reward;
    GrpoConfig grpo;
    RetryPolicy retry;
    int metric_bins = 10;
    double conf_threshold = 0.85;
    std::string run_dir;          // empty = keep artifacts in memory only
    std::string config_snapshot;  // written verbatim to run_dir/config.snapshot
};

/// Full training loop. Batches are drawn in a seed-derived epoch order; the
/// whole run is reproducible from (config, seed) on the simulator. Partial
/// artifacts are flushed as they are produced.
TrainingArtifacts train(const TrainSetup& setup);

}  // namespace promptcal
