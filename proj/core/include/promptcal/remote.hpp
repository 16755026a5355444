#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "promptcal/backend.hpp"

namespace promptcal {

/// OpenAI-compatible chat-completions endpoint.
struct RemoteConfig {
    std::string base_url = "http://localhost:8000/v1";
    std::string model = "default";
    std::string api_key_env = "OPENAI_API_KEY";  // token read from this env var, never from files
    int timeout_seconds = 120;
    int max_in_flight = 8;
    bool send_top_k = true;  // probed once: dropped for the rest of the run if rejected

    void validate() const {
        if (base_url.empty()) throw ConfigError("remote: base_url must be set");
        if (model.empty()) throw ConfigError("remote: model must be set");
        if (timeout_seconds < 1) throw ConfigError("remote: timeout_seconds must be >= 1");
        if (max_in_flight < 1) throw ConfigError("remote: max_in_flight must be >= 1");
    }
};

/// HTTP POST {base_url}/chat/completions. Bearer auth from the configured
/// environment variable. At most max_in_flight requests are outstanding at
/// any time; image_ref is forwarded as an image_url content part.
class RemoteBackend : public Backend {
public:
    explicit RemoteBackend(RemoteConfig config);
    ~RemoteBackend() override;

    std::string generate(const std::string& prompt, const std::optional<std::string>& image_ref,
                         const GenerationParams& params) override;

    std::string name() const override { return "remote:" + config_.model; }

    const RemoteConfig& config() const { return config_; }

private:
    RemoteConfig config_;
    std::string host_;         // scheme://host:port
    std::string path_prefix_;  // e.g. /v1
    std::string api_key_;
    std::atomic<bool> omit_top_k_{false};
    struct Gate;
    std::unique_ptr<Gate> gate_;  // bounds in-flight requests

    std::string build_request_body(const std::string& prompt,
                                   const std::optional<std::string>& image_ref,
                                   const GenerationParams& params, bool include_top_k) const;
};

}  // namespace promptcal
