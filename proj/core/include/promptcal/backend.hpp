#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "promptcal/parsing.hpp"
#include "promptcal/types.hpp"

namespace promptcal {

struct GenerationParams {
    double temperature = 0.6;
    int top_k = 100;
    int max_new_tokens = 256;
    std::optional<std::uint64_t> seed;  // simulator only

    void validate() const {
        if (temperature < 0.0) throw ConfigError("generation: temperature must be >= 0");
        if (top_k < 1) throw ConfigError("generation: top_k must be >= 1");
        if (max_new_tokens < 1) throw ConfigError("generation: max_new_tokens must be >= 1");
    }
};

struct RetryPolicy {
    int max_retries = 2;  // attempts = max_retries + 1
    int initial_backoff_ms = 250;
    double backoff_multiplier = 2.0;
    int max_backoff_ms = 5000;
};

/// A model that answers prompts. Implementations must be safe to share across
/// concurrent rollout workers.
class Backend {
public:
    virtual ~Backend() = default;

    /// Returns raw assistant text. Remote implementations may throw
    /// TransportError / TimeoutError / HttpStatusError / BackendRejection.
    virtual std::string generate(const std::string& prompt,
                                 const std::optional<std::string>& image_ref,
                                 const GenerationParams& params) = 0;

    virtual std::string name() const = 0;
};

/// render_downstream_prompt -> generate -> parse_prediction, with exponential
/// backoff on transport-class errors. A response that fails to parse is data,
/// not an outage: it becomes Prediction::Invalid and is never retried.
Prediction answer_query(Backend& backend, const Query& query, const std::optional<Cgp>& cgp,
                        const InstructionTemplate& tmpl, const GenerationParams& params,
                        const RetryPolicy& retry = {});

/// Raw-text variant of the retry wrapper, for callers that parse differently.
std::string generate_with_retry(Backend& backend, const std::string& prompt,
                                const std::optional<std::string>& image_ref,
                                const GenerationParams& params, const RetryPolicy& retry = {});

}  // namespace promptcal
