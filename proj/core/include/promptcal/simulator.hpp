#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "promptcal/backend.hpp"
#include "promptcal/types.hpp"

namespace promptcal {

/// Controls the simulated downstream model. Trigger phrases give a
/// controllable causal channel from prompt text to accuracy/confidence: a
/// phrase contained anywhere in the rendered prompt shifts the effective
/// values by its deltas (clamped to [0,1]).
struct SimulatorProfile {
    struct FeatureEffect {
        std::string trigger_phrase;
        double accuracy_delta = 0.0;
        double conf_delta = 0.0;
    };

    double base_accuracy = 0.5;
    double base_conf_mean = 0.9;
    double base_conf_spread = 0.08;  // gaussian sigma of the confidence draw
    std::vector<FeatureEffect> feature_effects;
    double invalid_rate = 0.0;

    void validate() const;
};

SimulatorProfile simulator_profile_from_yaml(const std::string& yaml);
SimulatorProfile load_simulator_profile(const std::string& path);

/// Deterministic downstream-model stand-in: generate() is a pure function of
/// (profile, prompt, seed). With temperature 0 all randomness collapses to the
/// modal outcome, so repeated sampling is exactly self-consistent.
///
/// Ground truth comes from the answer key built out of the datasets this
/// backend was given; prompts whose question is not in the key fall back to a
/// prompt-hash-derived truth so standalone generate() calls stay deterministic.
class SimulatorBackend : public Backend {
public:
    explicit SimulatorBackend(SimulatorProfile profile) : profile_(std::move(profile)) {
        profile_.validate();
    }

    void register_dataset(const Dataset& dataset);

    std::string generate(const std::string& prompt, const std::optional<std::string>& image_ref,
                         const GenerationParams& params) override;

    std::string name() const override { return "simulator"; }

    const SimulatorProfile& profile() const { return profile_; }

private:
    struct KeyEntry {
        int truth_index;
        int option_count;
    };

    SimulatorProfile profile_;
    std::unordered_map<std::string, KeyEntry> answer_key_;  // question text -> truth
};

}  // namespace promptcal
