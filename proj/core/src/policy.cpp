#include "promptcal/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "promptcal/rng.hpp"
#include "promptcal/text.hpp"

namespace promptcal {

using json = nlohmann::json;

namespace {

constexpr double kLogitClip = 50.0;

std::string hex64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a:%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string substitute_all(std::string text, const std::string& placeholder,
                           const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        text.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
    return text;
}

double logsumexp(const std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace

PromptLibrary::PromptLibrary(std::vector<std::string> templates)
    : templates_(std::move(templates)) {
    if (templates_.size() < 2) throw ConfigError("prompt library: need at least 2 templates");
    std::unordered_set<std::string> seen;
    for (const auto& t : templates_)
        if (!seen.insert(t).second)
            throw ConfigError("prompt library: duplicate template '" + t + "'");
}

PromptLibrary PromptLibrary::default_library() {
    // no-op, reasoning, caution, elimination, rubric, and combinations; one
    // template exercises the {question} placeholder
    return PromptLibrary({
        "",
        "Think step by step about the question before committing to an answer.",
        "think step-by-step, do not be over-confident",
        "Rule out each implausible option in turn and keep only the strongest candidate before "
        "answering.",
        "Report a confidence of 90 or above only when you are certain; use 60-89 when mostly "
        "sure; use a value below 60 when you are guessing.",
        "Think step by step about the question before committing to an answer. Report a "
        "confidence of 90 or above only when you are certain; use 60-89 when mostly sure; use a "
        "value below 60 when you are guessing.",
        "Rule out each implausible option in turn and keep only the strongest candidate before "
        "answering. Do not state high confidence unless the remaining option is clearly "
        "supported.",
        "Restate what is being asked in: {question}. Then answer with a confidence that honestly "
        "reflects how sure you are.",
    });
}

Cgp PromptLibrary::render(std::size_t index, const Query& query) const {
    if (index >= templates_.size())
        throw IndexError("template index " + std::to_string(index) + " out of range");
    return Cgp{substitute_all(templates_[index], "{question}", query.question),
               CgpSource::Learned};
}

std::string PromptLibrary::hash() const {
    std::string joined;
    for (const auto& t : templates_) {
        joined += t;
        joined += '\x1f';
    }
    return hex64(fnv1a64(joined));
}

std::string FeatureConfig::hash() const {
    std::string joined;
    for (int b : length_buckets) {
        joined += std::to_string(b);
        joined += ',';
    }
    joined += '\x1f';
    for (const auto& k : keywords) {
        joined += k;
        joined += '\x1f';
    }
    return hex64(fnv1a64(joined));
}

std::vector<double> extract_features(const Query& query, const FeatureConfig& cfg) {
    std::vector<double> f;
    f.reserve(cfg.dimension());
    f.push_back(1.0);  // bias

    // question length bucket, one-hot over len <= t_0, (t_0, t_1], ..., > t_last
    const std::size_t len = query.question.size();
    std::size_t bucket = cfg.length_buckets.size();
    for (std::size_t i = 0; i < cfg.length_buckets.size(); ++i) {
        if (len <= static_cast<std::size_t>(cfg.length_buckets[i])) {
            bucket = i;
            break;
        }
    }
    for (std::size_t i = 0; i <= cfg.length_buckets.size(); ++i)
        f.push_back(i == bucket ? 1.0 : 0.0);

    f.push_back(static_cast<double>(query.option_count()) / 8.0);

    std::string scan = query.question;
    for (const auto& opt : query.options) {
        scan += ' ';
        scan += opt;
    }
    for (const auto& kw : cfg.keywords) f.push_back(contains_icase(scan, kw) ? 1.0 : 0.0);
    return f;
}

SoftmaxPolicy::SoftmaxPolicy(PromptLibrary library, FeatureConfig features)
    : library_(std::move(library)), features_(std::move(features)) {
    weights_.assign(n_templates() * feature_dim(), 0.0);
    reference_weights_ = weights_;
}

std::vector<double> SoftmaxPolicy::logits(const std::vector<double>& features) const {
    if (features.size() != feature_dim())
        throw SizeError("feature vector has dimension " + std::to_string(features.size()) +
                        ", expected " + std::to_string(feature_dim()));
    const std::size_t d = feature_dim();
    std::vector<double> z(n_templates(), 0.0);
    for (std::size_t i = 0; i < n_templates(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += weights_[i * d + j] * features[j];
        z[i] = std::clamp(dot, -kLogitClip, kLogitClip);
    }
    return z;
}

std::vector<double> SoftmaxPolicy::probabilities(const std::vector<double>& features,
                                                 double temperature) const {
    std::vector<double> z = logits(features);
    if (temperature <= 0.0) {
        // degenerate greedy distribution, ties to the lowest index
        const std::size_t best = static_cast<std::size_t>(
            std::max_element(z.begin(), z.end()) - z.begin());
        std::vector<double> p(z.size(), 0.0);
        p[best] = 1.0;
        return p;
    }
    if (temperature != 1.0)
        for (double& v : z) v = std::clamp(v / temperature, -kLogitClip, kLogitClip);
    const double lse = logsumexp(z);
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::exp(z[i] - lse);
    return p;
}

SampledCgp SoftmaxPolicy::sample(const Query& query, double temperature,
                                 std::uint64_t seed) const {
    const std::vector<double> f = extract_features(query, features_);
    const std::vector<double> p = probabilities(f, temperature);
    Rng rng(seed);
    const double u = rng.next_double();
    double cum = 0.0;
    std::size_t action = p.size() - 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
        cum += p[i];
        if (u < cum) {
            action = i;
            break;
        }
    }
    return SampledCgp{library_.render(action, query), log_prob(f, action), action};
}

double SoftmaxPolicy::log_prob(const std::vector<double>& features,
                               std::size_t action_index) const {
    if (action_index >= n_templates())
        throw IndexError("action index " + std::to_string(action_index) + " out of range");
    const std::vector<double> z = logits(features);
    return z[action_index] - logsumexp(z);
}

std::pair<double, std::vector<double>> SoftmaxPolicy::log_prob_and_grad(
    const std::vector<double>& features, std::size_t action_index) const {
    if (action_index >= n_templates())
        throw IndexError("action index " + std::to_string(action_index) + " out of range");
    const std::vector<double> z = logits(features);
    const double lse = logsumexp(z);
    const std::size_t d = feature_dim();
    std::vector<double> grad(n_templates() * d, 0.0);
    for (std::size_t i = 0; i < n_templates(); ++i) {
        const double indicator = (i == action_index) ? 1.0 : 0.0;
        const double coeff = indicator - std::exp(z[i] - lse);
        for (std::size_t j = 0; j < d; ++j) grad[i * d + j] = coeff * features[j];
    }
    return {z[action_index] - lse, std::move(grad)};
}

double SoftmaxPolicy::kl_to_reference(const std::vector<double>& features) const {
    return kl_and_grad_to_reference(features).first;
}

std::pair<double, std::vector<double>> SoftmaxPolicy::kl_and_grad_to_reference(
    const std::vector<double>& features) const {
    const std::size_t n = n_templates();
    const std::size_t d = feature_dim();

    const std::vector<double> zp = logits(features);
    std::vector<double> zq(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += reference_weights_[i * d + j] * features[j];
        zq[i] = std::clamp(dot, -kLogitClip, kLogitClip);
    }
    const double lse_p = logsumexp(zp);
    const double lse_q = logsumexp(zq);

    // KL in log space: sum_i p_i ((zp_i - lse_p) - (zq_i - lse_q))
    double kl = 0.0;
    std::vector<double> p(n), log_ratio(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = std::exp(zp[i] - lse_p);
        log_ratio[i] = (zp[i] - lse_p) - (zq[i] - lse_q);
        kl += p[i] * log_ratio[i];
    }
    kl = std::max(0.0, kl);  // guard against -0 rounding

    // dKL/dz_i = p_i (log_ratio_i - KL)
    std::vector<double> grad(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double dz = p[i] * (log_ratio[i] - kl);
        for (std::size_t j = 0; j < d; ++j) grad[i * d + j] = dz * features[j];
    }
    return {kl, std::move(grad)};
}

Cgp SoftmaxPolicy::greedy_cgp(const Query& query) {
    const std::vector<double> f = extract_features(query, features_);
    const std::vector<double> z = logits(f);
    const std::size_t best =
        static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    return library_.render(best, query);
}

Cgp SoftmaxPolicy::sample_cgp_text(const Query& query, std::uint64_t seed) {
    return sample(query, sample_temperature, seed).cgp;
}

std::string SoftmaxPolicy::save_checkpoint() const {
    json j;
    j["schema_version"] = "1.0";
    j["kind"] = "softmax_policy";
    j["n_templates"] = n_templates();
    j["feature_dim"] = feature_dim();
    j["library_hash"] = library_.hash();
    j["feature_config_hash"] = features_.hash();
    j["weights"] = weights_;
    j["reference_weights"] = reference_weights_;
    return j.dump(2);
}

void SoftmaxPolicy::save_checkpoint_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out << save_checkpoint() << '\n';
}

void SoftmaxPolicy::load_checkpoint(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    if (j.value("kind", "") != "softmax_policy")
        throw ChecksumError("checkpoint kind '" + j.value("kind", "") + "' is not softmax_policy");
    const std::string ver = j.value("schema_version", "0.0");
    if (ver.substr(0, ver.find('.')) != "1")
        throw ChecksumError("checkpoint schema_version " + ver + " unsupported");
    if (j.at("library_hash").get<std::string>() != library_.hash())
        throw ChecksumError("checkpoint was trained against a different prompt library (hash " +
                            j.at("library_hash").get<std::string>() + " != " + library_.hash() +
                            ")");
    if (j.at("feature_config_hash").get<std::string>() != features_.hash())
        throw ChecksumError("checkpoint feature config does not match");
    std::vector<double> w = j.at("weights").get<std::vector<double>>();
    std::vector<double> rw = j.at("reference_weights").get<std::vector<double>>();
    if (w.size() != n_templates() * feature_dim() || rw.size() != w.size())
        throw ChecksumError("checkpoint weight shape does not match library/features");
    weights_ = std::move(w);
    reference_weights_ = std::move(rw);
}

void SoftmaxPolicy::load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    load_checkpoint(ss.str());
}

RemoteLlmPolicy::RemoteLlmPolicy(std::shared_ptr<Backend> backend,
                                 std::string meta_prompt_template, GenerationParams params,
                                 std::size_t max_cgp_chars)
    : backend_(std::move(backend)),
      meta_prompt_template_(std::move(meta_prompt_template)),
      params_(params),
      max_cgp_chars_(max_cgp_chars) {
    if (!backend_) throw ConfigError("remote policy: backend must be set");
    if (meta_prompt_template_.empty()) throw ConfigError("remote policy: meta prompt must be set");
}

std::string RemoteLlmPolicy::build_meta_prompt(const Query& query) const {
    std::string options;
    for (int i = 0; i < query.option_count(); ++i) {
        if (i > 0) options += '\n';
        options += option_letter(i);
        options += ". ";
        options += query.options[static_cast<std::size_t>(i)];
    }
    std::string out = substitute_all(meta_prompt_template_, "{question}", query.question);
    return substitute_all(out, "{options}", options);
}

Cgp RemoteLlmPolicy::greedy_cgp(const Query& query) {
    GenerationParams p = params_;
    p.temperature = 0.0;
    std::string text = backend_->generate(build_meta_prompt(query), std::nullopt, p);
    if (text.size() > max_cgp_chars_) text.resize(max_cgp_chars_);
    return Cgp{trim(text), CgpSource::Learned};
}

Cgp RemoteLlmPolicy::sample_cgp_text(const Query& query, std::uint64_t seed) {
    GenerationParams p = params_;
    p.seed = seed;
    std::string text = backend_->generate(build_meta_prompt(query), std::nullopt, p);
    if (text.size() > max_cgp_chars_) text.resize(max_cgp_chars_);
    return Cgp{trim(text), CgpSource::Learned};
}

}  // namespace promptcal
