#include "promptcal/eval.hpp"

#include "parallel.hpp"
#include "promptcal/rng.hpp"

namespace promptcal {

std::vector<EvalRecord> run_policy_eval(CgpPolicy* policy, const Dataset& data, Backend& backend,
                                        const InstructionTemplate& tmpl,
                                        const GenerationParams& params, const RetryPolicy& retry,
                                        const EvalSettings& settings) {
    if (data.empty()) throw EmptyError("eval: empty dataset");
    std::vector<EvalRecord> records(data.size(),
                                    EvalRecord{"", Prediction::invalid("", InvalidReason::Unparseable), 0});
    detail::parallel_for(data.size(), settings.max_workers, [&](std::size_t i) {
        const Query& query = data.records[i];
        std::optional<Cgp> cgp;
        if (policy) {
            cgp = settings.sample_cgp
                      ? policy->sample_cgp_text(
                            query, derive_seed(settings.seed, "eval-cgp", fnv1a64(query.id)))
                      : policy->greedy_cgp(query);
        }
        GenerationParams call_params = params;
        call_params.seed = derive_seed(settings.seed, "eval-downstream", fnv1a64(query.id));
        const Prediction pred = answer_query(backend, query, cgp, tmpl, call_params, retry);
        records[i] = EvalRecord{query.id, pred, query.truth_index};
    });
    return records;
}

}  // namespace promptcal
