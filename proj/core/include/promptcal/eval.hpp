#pragma once

#include <cstdint>
#include <vector>

#include "promptcal/backend.hpp"
#include "promptcal/metrics.hpp"
#include "promptcal/policy.hpp"

namespace promptcal {

struct EvalSettings {
    bool sample_cgp = false;  // default: greedy (argmax) CGP selection
    std::uint64_t seed = 0;
    int max_workers = 8;
};

/// Runs inference over a split: CGP per query (greedy or sampled), one
/// downstream call each, one EvalRecord per query in dataset order.
/// policy may be null, in which case no CGP is attached.
std::vector<EvalRecord> run_policy_eval(CgpPolicy* policy, const Dataset& data, Backend& backend,
                                        const InstructionTemplate& tmpl,
                                        const GenerationParams& params, const RetryPolicy& retry,
                                        const EvalSettings& settings);

}  // namespace promptcal
