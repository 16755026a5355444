#include "promptcal/baselines.hpp"

#include <algorithm>

#include "parallel.hpp"
#include "promptcal/rng.hpp"

namespace promptcal {

std::string to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::Verbalized: return "verbalized";
        case BaselineKind::VerbalizedFixedPA: return "verbalized-fixed";
        case BaselineKind::Consistency: return "consistency";
        case BaselineKind::AvgConf: return "avg-conf";
    }
    return "verbalized";
}

BaselineKind baseline_kind_from_string(const std::string& s) {
    if (s == "verbalized") return BaselineKind::Verbalized;
    if (s == "verbalized-fixed" || s == "verbalized-fixed-pa") return BaselineKind::VerbalizedFixedPA;
    if (s == "consistency") return BaselineKind::Consistency;
    if (s == "avg-conf" || s == "avgconf") return BaselineKind::AvgConf;
    throw ConfigError("unknown baseline kind '" + s +
                      "' (expected verbalized|verbalized-fixed|consistency|avg-conf)");
}

void BaselineSpec::validate() const {
    if (n_samples < 1) throw ConfigError("baseline: n_samples must be >= 1");
    if (kind == BaselineKind::VerbalizedFixedPA && fixed_prompt.empty())
        throw ConfigError("baseline: verbalized-fixed requires a fixed_prompt");
}

Prediction aggregate_consistency(const std::vector<Prediction>& samples) {
    if (samples.empty()) throw SizeError("consistency: no samples");
    const Prediction& original = samples.front();
    if (!original.is_valid()) return original;

    const int anchor = original.as_valid().answer_index;
    std::size_t matches = 0;
    for (const auto& s : samples)
        if (s.is_valid() && s.as_valid().answer_index == anchor) ++matches;
    return Prediction::valid(anchor,
                             static_cast<double>(matches) / static_cast<double>(samples.size()));
}

Prediction aggregate_avg_conf(const std::vector<Prediction>& samples, int k) {
    if (samples.empty()) throw SizeError("avg-conf: no samples");
    if (k < 2) throw SizeError("avg-conf: option count must be >= 2");

    // Confidence mass per candidate answer, accumulated on the native 0-100
    // scale (the wire scale), where typical values are exact integers.
    std::vector<double> mass(static_cast<std::size_t>(k), 0.0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    std::size_t n_valid = 0;
    for (const auto& s : samples) {
        if (!s.is_valid()) continue;
        const auto& v = s.as_valid();
        if (v.answer_index < 0 || v.answer_index >= k) continue;
        ++n_valid;
        mass[static_cast<std::size_t>(v.answer_index)] += v.confidence * 100.0;
        counts[static_cast<std::size_t>(v.answer_index)] += 1;
    }
    if (n_valid == 0)
        return Prediction::invalid("avg-conf: no valid samples", InvalidReason::Unparseable);

    double total = 0.0;
    for (double m : mass) total += m;
    if (total == 0.0) {
        // every stated confidence was zero; fall back to plain counts
        for (int a = 0; a < k; ++a) mass[static_cast<std::size_t>(a)] =
            static_cast<double>(counts[static_cast<std::size_t>(a)]);
        total = static_cast<double>(n_valid);
    }

    std::size_t best = 0;
    for (std::size_t a = 1; a < mass.size(); ++a)
        if (mass[a] > mass[best]) best = a;  // ties stay at the lowest index
    return Prediction::valid(static_cast<int>(best), mass[best] / total);
}

namespace {

std::vector<Prediction> collect_samples(Backend& backend, const Query& query,
                                        const InstructionTemplate& tmpl,
                                        const GenerationParams& params, const BaselineSpec& spec,
                                        std::uint64_t seed, const RetryPolicy& retry) {
    std::optional<Cgp> cot;
    if (spec.cot_preamble && !spec.cot_text.empty()) cot = Cgp{spec.cot_text, CgpSource::Fixed};

    std::vector<Prediction> samples;
    samples.reserve(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        GenerationParams call_params = params;
        call_params.seed = derive_seed(seed, "baseline-sample", fnv1a64(query.id), i);
        samples.push_back(answer_query(backend, query, cot, tmpl, call_params, retry));
    }
    return samples;
}

}  // namespace

EvalRecord run_verbalized(Backend& backend, const Query& query, const InstructionTemplate& tmpl,
                          const GenerationParams& params,
                          const std::optional<std::string>& fixed_prompt, std::uint64_t seed,
                          const RetryPolicy& retry) {
    std::optional<Cgp> cgp;
    if (fixed_prompt && !fixed_prompt->empty()) cgp = Cgp{*fixed_prompt, CgpSource::Fixed};
    GenerationParams call_params = params;
    call_params.seed = derive_seed(seed, "baseline-sample", fnv1a64(query.id), 0);
    const Prediction pred = answer_query(backend, query, cgp, tmpl, call_params, retry);
    return EvalRecord{query.id, pred, query.truth_index};
}

EvalRecord run_consistency(Backend& backend, const Query& query, const InstructionTemplate& tmpl,
                           const GenerationParams& params, const BaselineSpec& spec,
                           std::uint64_t seed, const RetryPolicy& retry) {
    spec.validate();
    const auto samples = collect_samples(backend, query, tmpl, params, spec, seed, retry);
    return EvalRecord{query.id, aggregate_consistency(samples), query.truth_index};
}

EvalRecord run_avg_conf(Backend& backend, const Query& query, const InstructionTemplate& tmpl,
                        const GenerationParams& params, const BaselineSpec& spec,
                        std::uint64_t seed, const RetryPolicy& retry) {
    spec.validate();
    const auto samples = collect_samples(backend, query, tmpl, params, spec, seed, retry);
    return EvalRecord{query.id, aggregate_avg_conf(samples, query.option_count()),
                      query.truth_index};
}

std::vector<EvalRecord> run_baseline_split(Backend& backend, const Dataset& data,
                                           const InstructionTemplate& tmpl,
                                           const GenerationParams& params,
                                           const BaselineSpec& spec, std::uint64_t seed,
                                           int max_workers, const RetryPolicy& retry) {
    if (data.empty()) throw EmptyError("baseline: empty dataset");
    spec.validate();
    std::vector<EvalRecord> records(
        data.size(), EvalRecord{"", Prediction::invalid("", InvalidReason::Unparseable), 0});
    detail::parallel_for(data.size(), max_workers, [&](std::size_t i) {
        const Query& query = data.records[i];
        switch (spec.kind) {
            case BaselineKind::Verbalized:
                records[i] = run_verbalized(backend, query, tmpl, params, std::nullopt, seed, retry);
                break;
            case BaselineKind::VerbalizedFixedPA:
                records[i] =
                    run_verbalized(backend, query, tmpl, params, spec.fixed_prompt, seed, retry);
                break;
            case BaselineKind::Consistency:
                records[i] = run_consistency(backend, query, tmpl, params, spec, seed, retry);
                break;
            case BaselineKind::AvgConf:
                records[i] = run_avg_conf(backend, query, tmpl, params, spec, seed, retry);
                break;
        }
    });
    return records;
}

}  // namespace promptcal
