#include "promptcal/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "promptcal/rng.hpp"

namespace promptcal {

namespace {

constexpr char kKeySep = '\x1f';

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Text with no parseable answer/confidence marker.
const char* kGarbledText =
    "The findings are notable but I am unable to commit to a single option here.";

/// Rebuilds the (question, options) key from a prompt rendered by
/// render_downstream_prompt. Returns option count; empty question if the
/// prompt was not produced by the harness renderer.
struct ParsedPrompt {
    std::string key;
    int option_count = 0;
};

ParsedPrompt parse_rendered_prompt(const std::string& prompt) {
    ParsedPrompt out;
    const std::string q_marker = "Question: ";
    const std::string o_marker = "\nOptions:\n";
    std::size_t q = prompt.find(q_marker);
    if (q == std::string::npos) return out;
    std::size_t o = prompt.find(o_marker, q);
    if (o == std::string::npos) return out;
    std::string key = prompt.substr(q + q_marker.size(), o - q - q_marker.size());

    std::size_t pos = o + o_marker.size();
    int count = 0;
    while (pos + 3 <= prompt.size() && prompt[pos] == static_cast<char>('A' + count) &&
           prompt[pos + 1] == '.' && prompt[pos + 2] == ' ') {
        std::size_t eol = prompt.find('\n', pos);
        if (eol == std::string::npos) eol = prompt.size();
        key += kKeySep;
        key += prompt.substr(pos + 3, eol - pos - 3);
        ++count;
        if (eol >= prompt.size()) break;
        pos = eol + 1;
    }
    if (count < 2) return ParsedPrompt{};
    out.key = key;
    out.option_count = count;
    return out;
}

}  // namespace

void SimulatorProfile::validate() const {
    if (base_accuracy < 0.0 || base_accuracy > 1.0)
        throw ConfigError("simulator: base_accuracy must be in [0,1]");
    if (invalid_rate < 0.0 || invalid_rate > 1.0)
        throw ConfigError("simulator: invalid_rate must be in [0,1]");
    if (base_conf_spread < 0.0) throw ConfigError("simulator: base_conf_spread must be >= 0");
}

SimulatorProfile simulator_profile_from_yaml(const std::string& yaml) {
    YAML::Node node;
    try {
        node = YAML::Load(yaml);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("simulator profile: ") + e.what());
    }
    SimulatorProfile p;
    if (node["base_accuracy"]) p.base_accuracy = node["base_accuracy"].as<double>();
    if (node["base_conf_mean"]) p.base_conf_mean = node["base_conf_mean"].as<double>();
    if (node["base_conf_spread"]) p.base_conf_spread = node["base_conf_spread"].as<double>();
    if (node["invalid_rate"]) p.invalid_rate = node["invalid_rate"].as<double>();
    if (node["feature_effects"]) {
        for (const auto& fx : node["feature_effects"]) {
            SimulatorProfile::FeatureEffect e;
            e.trigger_phrase = fx["trigger_phrase"].as<std::string>();
            if (fx["accuracy_delta"]) e.accuracy_delta = fx["accuracy_delta"].as<double>();
            if (fx["conf_delta"]) e.conf_delta = fx["conf_delta"].as<double>();
            p.feature_effects.push_back(std::move(e));
        }
    }
    p.validate();
    return p;
}

SimulatorProfile load_simulator_profile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open simulator profile '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return simulator_profile_from_yaml(ss.str());
}

void SimulatorBackend::register_dataset(const Dataset& dataset) {
    for (const auto& q : dataset.records) {
        std::string key = q.question;
        for (const auto& opt : q.options) {
            key += kKeySep;
            key += opt;
        }
        answer_key_[key] = KeyEntry{q.truth_index, q.option_count()};
    }
}

std::string SimulatorBackend::generate(const std::string& prompt,
                                       const std::optional<std::string>& image_ref,
                                       const GenerationParams& params) {
    (void)image_ref;  // images are opaque; the simulator never decodes pixels
    params.validate();

    double eff_acc = profile_.base_accuracy;
    double eff_conf = profile_.base_conf_mean;
    for (const auto& fx : profile_.feature_effects) {
        if (!fx.trigger_phrase.empty() && prompt.find(fx.trigger_phrase) != std::string::npos) {
            eff_acc += fx.accuracy_delta;
            eff_conf += fx.conf_delta;
        }
    }
    eff_acc = clamp01(eff_acc);
    eff_conf = clamp01(eff_conf);

    // Pure function of (profile, prompt, seed). Temperature 0 collapses every
    // draw to its modal outcome.
    const std::uint64_t seed = params.seed.value_or(0);
    Rng rng(hash_mix(fnv1a64(prompt), seed));
    const bool deterministic = params.temperature == 0.0;

    const bool invalid =
        deterministic ? profile_.invalid_rate > 0.5 : rng.next_bernoulli(profile_.invalid_rate);
    if (invalid) return kGarbledText;

    const ParsedPrompt parsed = parse_rendered_prompt(prompt);
    int truth;
    int k;
    if (!parsed.key.empty()) {
        k = parsed.option_count;
        auto it = answer_key_.find(parsed.key);
        // unknown questions get a prompt-derived truth so standalone calls stay deterministic
        truth = (it != answer_key_.end()) ? it->second.truth_index
                                          : static_cast<int>(fnv1a64(parsed.key) % k);
    } else {
        k = 4;
        truth = static_cast<int>(fnv1a64(prompt) % k);
    }

    const bool correct = deterministic ? eff_acc >= 0.5 : rng.next_bernoulli(eff_acc);
    double conf = deterministic
                      ? eff_conf
                      : clamp01(eff_conf + profile_.base_conf_spread * rng.next_gaussian());
    int answer = truth;
    if (!correct) {
        answer = deterministic
                     ? (truth + 1) % k
                     : static_cast<int>((truth + 1 + rng.next_below(static_cast<std::uint64_t>(k - 1))) % k);
    }

    std::string out = "Answer: ";
    out += option_letter(answer);
    out += "\nConfidence: ";
    out += std::to_string(static_cast<int>(std::lround(conf * 100.0)));
    return out;
}

}  // namespace promptcal
