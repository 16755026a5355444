#include "promptcal/backend.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

namespace promptcal {

namespace {

bool retryable_status(int code) { return code >= 500 || code == 429; }

}  // namespace

std::string generate_with_retry(Backend& backend, const std::string& prompt,
                                const std::optional<std::string>& image_ref,
                                const GenerationParams& params, const RetryPolicy& retry) {
    if (prompt.empty()) throw ConfigError("generate: prompt must be non-empty");
    int attempt = 0;
    double backoff = retry.initial_backoff_ms;
    while (true) {
        bool retryable = false;
        try {
            return backend.generate(prompt, image_ref, params);
        } catch (const TransportError&) {
            retryable = true;
            if (attempt >= retry.max_retries) throw;
        } catch (const HttpStatusError& e) {
            retryable = retryable_status(e.code);
            if (!retryable || attempt >= retry.max_retries) throw;
        }
        (void)retryable;
        std::this_thread::sleep_for(
            std::chrono::milliseconds(static_cast<long>(std::min(backoff,
                static_cast<double>(retry.max_backoff_ms)))));
        backoff *= retry.backoff_multiplier;
        ++attempt;
    }
}

Prediction answer_query(Backend& backend, const Query& query, const std::optional<Cgp>& cgp,
                        const InstructionTemplate& tmpl, const GenerationParams& params,
                        const RetryPolicy& retry) {
    const std::string prompt = render_downstream_prompt(query, cgp, tmpl);
    const std::string raw = generate_with_retry(backend, prompt, query.image_ref, params, retry);
    // unparseable output is data, never retried
    return parse_prediction(raw, query.option_count());
}

}  // namespace promptcal
