#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "promptcal/backend.hpp"
#include "promptcal/metrics.hpp"

namespace promptcal {

enum class BaselineKind { Verbalized, VerbalizedFixedPA, Consistency, AvgConf };

std::string to_string(BaselineKind kind);
BaselineKind baseline_kind_from_string(const std::string& s);

struct BaselineSpec {
    BaselineKind kind = BaselineKind::Verbalized;
    std::size_t n_samples = 21;  // Consistency / AvgConf
    std::string fixed_prompt = "think step-by-step, do not be over-confident";
    bool cot_preamble = true;  // zero-shot CoT for Consistency / AvgConf
    std::string cot_text = "Let's think step by step before answering.";

    void validate() const;
};

// Aggregation is factored out of collection so the two sampling baselines can
// be property-tested on shared sample sets.

/// Anchors on the ORIGINAL (first) response: confidence is the fraction of all
/// n samples (original included) whose answer matches it. An invalid original
/// makes the whole record invalid; invalid extras count as non-matching.
Prediction aggregate_consistency(const std::vector<Prediction>& samples);

/// score(a) = sum of confidence over valid samples answering a, normalized by
/// total confidence mass; answer = argmax (ties -> lowest option index),
/// confidence = score(answer). Mass is accumulated on the native 0-100 scale.
/// Invalid when no sample is valid; zero total mass falls back to counts.
Prediction aggregate_avg_conf(const std::vector<Prediction>& samples, int k);

/// One downstream call; fixed_prompt (when present) rides in the CGP slot.
EvalRecord run_verbalized(Backend& backend, const Query& query, const InstructionTemplate& tmpl,
                          const GenerationParams& params,
                          const std::optional<std::string>& fixed_prompt, std::uint64_t seed,
                          const RetryPolicy& retry = {});

/// n_samples self-random samples (original first) at the configured
/// temperature, aggregated by aggregate_consistency.
EvalRecord run_consistency(Backend& backend, const Query& query, const InstructionTemplate& tmpl,
                           const GenerationParams& params, const BaselineSpec& spec,
                           std::uint64_t seed, const RetryPolicy& retry = {});

EvalRecord run_avg_conf(Backend& backend, const Query& query, const InstructionTemplate& tmpl,
                        const GenerationParams& params, const BaselineSpec& spec,
                        std::uint64_t seed, const RetryPolicy& retry = {});

/// Whole-split run, one record per query in dataset order.
std::vector<EvalRecord> run_baseline_split(Backend& backend, const Dataset& data,
                                           const InstructionTemplate& tmpl,
                                           const GenerationParams& params,
                                           const BaselineSpec& spec, std::uint64_t seed,
                                           int max_workers, const RetryPolicy& retry = {});

}  // namespace promptcal
