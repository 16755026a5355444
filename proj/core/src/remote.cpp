#include "promptcal/remote.hpp"

#include <cstdlib>
#include <semaphore>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace promptcal {

using json = nlohmann::json;

struct RemoteBackend::Gate {
    explicit Gate(int n) : sem(n) {}
    std::counting_semaphore<> sem;

    struct Slot {
        explicit Slot(Gate& g) : gate(g) { gate.sem.acquire(); }
        ~Slot() { gate.sem.release(); }
        Gate& gate;
    };
};

namespace {

std::string snippet(const std::string& body) {
    return body.size() <= 200 ? body : body.substr(0, 200) + "...";
}

std::string extract_error_message(const std::string& body) {
    try {
        const json j = json::parse(body);
        if (j.contains("error")) {
            const auto& e = j["error"];
            if (e.is_object() && e.contains("message")) return e["message"].get<std::string>();
            if (e.is_string()) return e.get<std::string>();
        }
    } catch (const json::exception&) {
    }
    return snippet(body);
}

std::string extract_content(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw BackendRejection(std::string("malformed chat-completion response: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
        throw BackendRejection("chat-completion response has no choices");
    const auto& message = j["choices"][0].at("message");
    const auto& content = message.at("content");
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
        std::string out;
        for (const auto& part : content)
            if (part.is_object() && part.value("type", "") == "text")
                out += part.value("text", "");
        return out;
    }
    throw BackendRejection("chat-completion content has unsupported shape");
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto scheme = config_.base_url.find("://");
    if (scheme == std::string::npos)
        throw ConfigError("remote: base_url must include a scheme, got '" + config_.base_url + "'");
    const auto slash = config_.base_url.find('/', scheme + 3);
    host_ = slash == std::string::npos ? config_.base_url : config_.base_url.substr(0, slash);
    path_prefix_ = slash == std::string::npos ? "" : config_.base_url.substr(slash);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    omit_top_k_ = !config_.send_top_k;
    gate_ = std::make_unique<Gate>(config_.max_in_flight);
}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::build_request_body(const std::string& prompt,
                                              const std::optional<std::string>& image_ref,
                                              const GenerationParams& params,
                                              bool include_top_k) const {
    json body;
    body["model"] = config_.model;
    json message;
    message["role"] = "user";
    if (image_ref) {
        message["content"] = json::array(
            {json{{"type", "text"}, {"text", prompt}},
             json{{"type", "image_url"}, {"image_url", json{{"url", *image_ref}}}}});
    } else {
        message["content"] = prompt;
    }
    body["messages"] = json::array({message});
    body["temperature"] = params.temperature;
    body["max_tokens"] = params.max_new_tokens;
    if (include_top_k) body["top_k"] = params.top_k;
    return body.dump();
}

std::string RemoteBackend::generate(const std::string& prompt,
                                    const std::optional<std::string>& image_ref,
                                    const GenerationParams& params) {
    params.validate();
    Gate::Slot slot(*gate_);

    bool include_top_k = !omit_top_k_.load();
    for (int pass = 0; pass < 2; ++pass) {
        httplib::Client client(host_);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        client.set_write_timeout(config_.timeout_seconds, 0);

        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        const std::string body = build_request_body(prompt, image_ref, params, include_top_k);
        auto res = client.Post(path_prefix_ + "/chat/completions", headers, body,
                               "application/json");
        if (!res) {
            const auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout)
                throw TimeoutError("request timed out against " + host_);
            throw TransportError("transport failure against " + host_ + ": " +
                                 httplib::to_string(err));
        }
        if (res->status == 200) return extract_content(res->body);

        // top_k is non-standard: probe once, then omit for the rest of the run
        if (res->status == 400 && include_top_k && res->body.find("top_k") != std::string::npos) {
            omit_top_k_ = true;
            include_top_k = false;
            continue;
        }
        if (res->status >= 400 && res->status < 500 && res->status != 429)
            throw BackendRejection("backend rejected request (" + std::to_string(res->status) +
                                   "): " + extract_error_message(res->body));
        throw HttpStatusError(res->status, snippet(res->body));
    }
    throw TransportError("unreachable");
}

}  // namespace promptcal
