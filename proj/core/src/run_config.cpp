#include "promptcal/run_config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "promptcal/dataset.hpp"

namespace promptcal {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename T>
void get(const YAML::Node& node, const char* key, T& out) {
    if (node && node[key]) out = node[key].as<T>();
}

const char* const kDefaultMetaPrompt =
    "You will see a multiple-choice question. Write one short instruction (at most two "
    "sentences) that helps another model answer it with a confidence that matches how likely "
    "it is to be right. Output only the instruction text.\n\nQuestion: {question}\nOptions:\n"
    "{options}";

}  // namespace

void RunConfig::validate() const {
    generation.validate();
    instruction.validate();
    reward.validate();
    grpo.validate();
    baseline.validate();
    if (metrics.n_bins < 1) throw ConfigError("metrics: n_bins must be >= 1");
    if (metrics.conf_threshold < 0.0 || metrics.conf_threshold > 1.0)
        throw ConfigError("metrics: conf_threshold must be in [0,1]");
    if (limits.max_prompt_tokens < 1 || limits.max_completion_tokens < 1)
        throw ConfigError("limits: token budgets must be >= 1");
    if (backend.kind == BackendSection::Kind::Simulator) backend.profile.validate();
    if (backend.kind == BackendSection::Kind::Remote) backend.remote.validate();
    if (policy.kind == PolicySection::Kind::Remote) policy.remote.validate();
    if (output_dir.empty()) throw ConfigError("run: output_dir must be set");
    // CGP templates must fit the completion budget
    for (const auto& t : policy.templates)
        if (t.size() > limits.max_cgp_chars())
            throw ConfigError("policy: template exceeds the completion budget (" +
                              std::to_string(limits.max_cgp_chars()) + " chars): '" +
                              t.substr(0, 40) + "...'");
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.policy.templates = PromptLibrary::default_library().templates();
    cfg.policy.meta_prompt = kDefaultMetaPrompt;
    return cfg;
}

std::string default_config_yaml() {
    return R"(# promptcal run configuration.
# Every value shown is the shipped default; delete anything you do not override.

run:
  output_dir: runs/demo
  seed: 12345

data:
  # JSON Lines files; one {"id", "question", "options", "answer", "image"?} object per line.
  # size 0 means "use every record"; otherwise a deterministic subsample is drawn.
  train: { path: data/train.jsonl, size: 5000 }
  val:   { path: data/val.jsonl,   size: 1000 }
  test:  { path: data/test.jsonl,  size: 0 }
  seed: 7

backend:
  kind: simulator            # simulator | remote
  simulator:
    # profile_path: profiles/sim.yaml   # optional; overrides the inline profile
    base_accuracy: 0.5
    base_conf_mean: 0.9
    base_conf_spread: 0.08
    invalid_rate: 0.02
    feature_effects:
      - { trigger_phrase: "Rule out each implausible option", accuracy_delta: 0.25, conf_delta: -0.08 }
  remote:
    base_url: http://localhost:8000/v1
    model: my-downstream-model
    api_key_env: OPENAI_API_KEY   # token is read from this env var, never from this file
    timeout_seconds: 120
    max_in_flight: 8

generation:
  temperature: 0.6
  top_k: 100
  max_new_tokens: 256

limits:
  max_prompt_tokens: 512
  max_completion_tokens: 256

instruction:
  preamble: "You are answering a multiple-choice question about a medical image."
  answer_directive: "State your final answer on its own line as \"Answer: <letter>\"."
  confidence_directive: "Then report how confident you are on its own line as \"Confidence: <score>\", where <score> is a whole number out of 100."

policy:
  kind: native               # native (trainable) | remote (frozen LLM generator, eval only)
  sample_temperature: 0.6
  # templates: [...]         # CGP library; omit to use the shipped 8-template default
  features:
    length_buckets: [50, 100, 200]
    keywords: [mri, ct, x-ray, ultrasound, pathology, microscopy]
  remote:
    base_url: http://localhost:8001/v1
    model: my-cgp-generator
    api_key_env: OPENAI_API_KEY

grpo:
  group_size: 8              # candidate completions per query
  beta: 0.04                 # KL penalty weight
  clip_epsilon: 0.2
  learning_rate: 0.01        # native softmax policy; LLM-scale fine-tuning uses 1e-6
  inner_iterations: 4        # optimization passes per collected batch
  batch_queries: 8
  max_steps: 200
  eval_every: 50             # 0 disables mid-run validation reports
  normalize_std: false       # ablation; default keeps raw mean-centered rewards
  reference_refresh_every: 0 # 0 keeps the initial snapshot as KL reference
  optimizer: sgd             # sgd | adam
  weight_decay: 0.0

baseline:
  n_samples: 21
  fixed_prompt: "think step-by-step, do not be over-confident"
  cot_preamble: true
  cot_text: "Let's think step by step before answering."

metrics:
  n_bins: 10
  conf_threshold: 0.85

reward:
  epsilon: 1.0e-10
  epsilon_penalty: 1.0e-12
  incorrect_offset: 1.0

retry:
  max_retries: 2
  initial_backoff_ms: 250
)";
}

RunConfig run_config_from_yaml(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig cfg = default_run_config();
    cfg.source_text = text;

    if (auto run = root["run"]) {
        get(run, "output_dir", cfg.output_dir);
        get(run, "seed", cfg.seed);
    }
    if (auto data = root["data"]) {
        auto split = [&](const char* key, DataSplitConfig& out) {
            if (auto s = data[key]) {
                get(s, "path", out.path);
                get(s, "size", out.size);
            }
        };
        split("train", cfg.data.train);
        split("val", cfg.data.val);
        split("test", cfg.data.test);
        get(data, "seed", cfg.data.seed);
    }
    if (auto backend = root["backend"]) {
        std::string kind = "simulator";
        get(backend, "kind", kind);
        if (kind == "simulator")
            cfg.backend.kind = BackendSection::Kind::Simulator;
        else if (kind == "remote")
            cfg.backend.kind = BackendSection::Kind::Remote;
        else
            throw ConfigError("backend.kind must be simulator or remote, got '" + kind + "'");
        if (auto sim = backend["simulator"]) {
            get(sim, "profile_path", cfg.backend.profile_path);
            get(sim, "base_accuracy", cfg.backend.profile.base_accuracy);
            get(sim, "base_conf_mean", cfg.backend.profile.base_conf_mean);
            get(sim, "base_conf_spread", cfg.backend.profile.base_conf_spread);
            get(sim, "invalid_rate", cfg.backend.profile.invalid_rate);
            if (auto fx = sim["feature_effects"]) {
                cfg.backend.profile.feature_effects.clear();
                for (const auto& item : fx) {
                    SimulatorProfile::FeatureEffect effect;
                    effect.trigger_phrase = item["trigger_phrase"].as<std::string>();
                    if (item["accuracy_delta"])
                        effect.accuracy_delta = item["accuracy_delta"].as<double>();
                    if (item["conf_delta"]) effect.conf_delta = item["conf_delta"].as<double>();
                    cfg.backend.profile.feature_effects.push_back(std::move(effect));
                }
            }
        }
        if (auto rem = backend["remote"]) {
            get(rem, "base_url", cfg.backend.remote.base_url);
            get(rem, "model", cfg.backend.remote.model);
            get(rem, "api_key_env", cfg.backend.remote.api_key_env);
            get(rem, "timeout_seconds", cfg.backend.remote.timeout_seconds);
            get(rem, "max_in_flight", cfg.backend.remote.max_in_flight);
            get(rem, "send_top_k", cfg.backend.remote.send_top_k);
        }
    }
    if (auto gen = root["generation"]) {
        get(gen, "temperature", cfg.generation.temperature);
        get(gen, "top_k", cfg.generation.top_k);
        get(gen, "max_new_tokens", cfg.generation.max_new_tokens);
    }
    if (auto limits = root["limits"]) {
        get(limits, "max_prompt_tokens", cfg.limits.max_prompt_tokens);
        get(limits, "max_completion_tokens", cfg.limits.max_completion_tokens);
    }
    if (auto instr = root["instruction"]) {
        get(instr, "preamble", cfg.instruction.preamble);
        get(instr, "answer_directive", cfg.instruction.answer_directive);
        get(instr, "confidence_directive", cfg.instruction.confidence_directive);
    }
    if (auto pol = root["policy"]) {
        std::string kind = "native";
        get(pol, "kind", kind);
        if (kind == "native")
            cfg.policy.kind = PolicySection::Kind::Native;
        else if (kind == "remote")
            cfg.policy.kind = PolicySection::Kind::Remote;
        else
            throw ConfigError("policy.kind must be native or remote, got '" + kind + "'");
        get(pol, "sample_temperature", cfg.policy.sample_temperature);
        if (auto t = pol["templates"]) cfg.policy.templates = t.as<std::vector<std::string>>();
        if (auto feat = pol["features"]) {
            if (auto b = feat["length_buckets"])
                cfg.policy.features.length_buckets = b.as<std::vector<int>>();
            if (auto k = feat["keywords"])
                cfg.policy.features.keywords = k.as<std::vector<std::string>>();
        }
        if (auto rem = pol["remote"]) {
            get(rem, "base_url", cfg.policy.remote.base_url);
            get(rem, "model", cfg.policy.remote.model);
            get(rem, "api_key_env", cfg.policy.remote.api_key_env);
            get(rem, "timeout_seconds", cfg.policy.remote.timeout_seconds);
            get(rem, "max_in_flight", cfg.policy.remote.max_in_flight);
        }
        get(pol, "meta_prompt", cfg.policy.meta_prompt);
    }
    if (auto grpo = root["grpo"]) {
        get(grpo, "group_size", cfg.grpo.group_size);
        get(grpo, "beta", cfg.grpo.beta);
        get(grpo, "clip_epsilon", cfg.grpo.clip_epsilon);
        get(grpo, "learning_rate", cfg.grpo.learning_rate);
        get(grpo, "inner_iterations", cfg.grpo.inner_iterations);
        get(grpo, "batch_queries", cfg.grpo.batch_queries);
        get(grpo, "max_steps", cfg.grpo.max_steps);
        get(grpo, "eval_every", cfg.grpo.eval_every);
        get(grpo, "normalize_std", cfg.grpo.normalize_std);
        get(grpo, "reference_refresh_every", cfg.grpo.reference_refresh_every);
        get(grpo, "weight_decay", cfg.grpo.weight_decay);
        get(grpo, "max_workers", cfg.grpo.max_workers);
        std::string opt = "sgd";
        get(grpo, "optimizer", opt);
        if (opt == "sgd")
            cfg.grpo.optimizer = GrpoConfig::Optimizer::Sgd;
        else if (opt == "adam")
            cfg.grpo.optimizer = GrpoConfig::Optimizer::Adam;
        else
            throw ConfigError("grpo.optimizer must be sgd or adam, got '" + opt + "'");
    }
    cfg.grpo.seed = cfg.seed;
    if (auto base = root["baseline"]) {
        get(base, "n_samples", cfg.baseline.n_samples);
        get(base, "fixed_prompt", cfg.baseline.fixed_prompt);
        get(base, "cot_preamble", cfg.baseline.cot_preamble);
        get(base, "cot_text", cfg.baseline.cot_text);
    }
    if (auto metrics = root["metrics"]) {
        get(metrics, "n_bins", cfg.metrics.n_bins);
        get(metrics, "conf_threshold", cfg.metrics.conf_threshold);
    }
    if (auto reward = root["reward"]) {
        get(reward, "epsilon", cfg.reward.epsilon);
        get(reward, "epsilon_penalty", cfg.reward.epsilon_penalty);
        get(reward, "incorrect_offset", cfg.reward.incorrect_offset);
    }
    if (auto retry = root["retry"]) {
        get(retry, "max_retries", cfg.retry.max_retries);
        get(retry, "initial_backoff_ms", cfg.retry.initial_backoff_ms);
    }

    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg = run_config_from_yaml(read_file(path));
    // referenced files must exist at load
    auto check = [](const std::string& p, const std::string& field) {
        if (!p.empty() && !fs::exists(p))
            throw ConfigError("config: " + field + " references missing file '" + p + "'");
    };
    check(cfg.data.train.path, "data.train.path");
    check(cfg.data.val.path, "data.val.path");
    check(cfg.data.test.path, "data.test.path");
    check(cfg.backend.profile_path, "backend.simulator.profile_path");
    return cfg;
}

std::shared_ptr<Backend> make_backend(const RunConfig& cfg,
                                      const std::vector<const Dataset*>& register_truth) {
    if (cfg.backend.kind == BackendSection::Kind::Remote)
        return std::make_shared<RemoteBackend>(cfg.backend.remote);
    SimulatorProfile profile = cfg.backend.profile;
    if (!cfg.backend.profile_path.empty()) profile = load_simulator_profile(cfg.backend.profile_path);
    auto sim = std::make_shared<SimulatorBackend>(profile);
    for (const Dataset* ds : register_truth)
        if (ds) sim->register_dataset(*ds);
    return sim;
}

std::unique_ptr<SoftmaxPolicy> make_native_policy(const RunConfig& cfg) {
    PromptLibrary library = cfg.policy.templates.empty()
                                ? PromptLibrary::default_library()
                                : PromptLibrary(cfg.policy.templates);
    auto policy = std::make_unique<SoftmaxPolicy>(std::move(library), cfg.policy.features);
    policy->sample_temperature = cfg.policy.sample_temperature;
    return policy;
}

std::unique_ptr<CgpPolicy> make_cgp_policy(const RunConfig& cfg) {
    if (cfg.policy.kind == PolicySection::Kind::Native) return make_native_policy(cfg);
    auto backend = std::make_shared<RemoteBackend>(cfg.policy.remote);
    GenerationParams params = cfg.generation;
    return std::make_unique<RemoteLlmPolicy>(backend,
                                             cfg.policy.meta_prompt.empty() ? kDefaultMetaPrompt
                                                                            : cfg.policy.meta_prompt,
                                             params, cfg.limits.max_cgp_chars());
}

Dataset load_split(const RunConfig& cfg, Split split) {
    const DataSplitConfig* section = nullptr;
    switch (split) {
        case Split::Train: section = &cfg.data.train; break;
        case Split::Val: section = &cfg.data.val; break;
        case Split::Test: section = &cfg.data.test; break;
    }
    if (section->path.empty())
        throw ConfigError("config: no dataset path configured for split " + to_string(split));

    // train and val sharing one file are carved disjointly from a single draw
    const bool shared = (split == Split::Train || split == Split::Val) &&
                        !cfg.data.train.path.empty() &&
                        cfg.data.train.path == cfg.data.val.path &&
                        cfg.data.train.size > 0 && cfg.data.val.size > 0;
    if (shared) {
        Dataset full = load_dataset(cfg.data.train.path, split);
        const std::size_t want = cfg.data.train.size + cfg.data.val.size;
        if (want > full.size())
            throw SizeError("train.size + val.size (" + std::to_string(want) +
                            ") exceeds dataset size " + std::to_string(full.size()));
        Dataset joint = split_sample(full, want, cfg.data.seed);
        Dataset out;
        out.split_label = split;
        if (split == Split::Train)
            out.records.assign(joint.records.begin(),
                               joint.records.begin() + static_cast<long>(cfg.data.train.size));
        else
            out.records.assign(joint.records.begin() + static_cast<long>(cfg.data.train.size),
                               joint.records.end());
        return out;
    }

    Dataset ds = load_dataset(section->path, split);
    if (section->size > 0 && section->size < ds.size())
        ds = split_sample(ds, section->size, cfg.data.seed);
    else if (section->size > ds.size())
        throw SizeError("configured size " + std::to_string(section->size) + " for split " +
                        to_string(split) + " exceeds dataset size " + std::to_string(ds.size()));
    return ds;
}

}  // namespace promptcal
