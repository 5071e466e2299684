#pragma once

// Chat-completions adapter over HTTPS. Kept in its own header so the rest of
// the library (and the test suite) can be built without pulling in a TLS stack.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <string>

#include <nlohmann/json.hpp>

#include "gfaudit/error.hpp"
#include "gfaudit/gateway.hpp"

namespace gfaudit {

/// Talks to an OpenAI-style /chat/completions endpoint. `spec.endpoint` holds
/// scheme, host and any path prefix, e.g. "https://api.openai.com/v1".
class ChatHttpProvider : public Provider {
public:
    explicit ChatHttpProvider(int timeout_seconds = 120) : timeout_seconds_(timeout_seconds) {}

    std::string id() const override { return "chat-http"; }

    Completion generate(const ModelSpec& spec, const std::string& prompt) override {
        if (spec.endpoint.empty()) throw ConfigError("model spec has no endpoint");
        if (spec.credential_env.empty())
            throw ConfigError("model spec has no credential_env; refusing anonymous call");
        const char* key = std::getenv(spec.credential_env.c_str());
        if (!key || !*key)
            throw AuthError("environment variable " + spec.credential_env + " is not set");

        auto [base, prefix] = split_endpoint(spec.endpoint);
        httplib::Client client(base);
        client.set_connection_timeout(timeout_seconds_, 0);
        client.set_read_timeout(timeout_seconds_, 0);
        client.set_bearer_token_auth(key);

        nlohmann::json body = {
            {"model", spec.model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
            {"temperature", spec.temperature},
            {"max_tokens", spec.max_tokens},
        };

        auto res = client.Post(prefix + "/chat/completions", body.dump(), "application/json");
        if (!res) throw TransientError("transport failure: " + httplib::to_string(res.error()));
        if (res->status == 401 || res->status == 403)
            throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
        if (res->status == 429 || res->status >= 500)
            throw TransientError("HTTP " + std::to_string(res->status) + ": " + res->body);
        if (res->status != 200)
            throw ProtocolError("HTTP " + std::to_string(res->status), res->body);

        return parse_chat_response(res->body);
    }

    static Completion parse_chat_response(const std::string& body) {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) throw ProtocolError("response body is not JSON", body);
        try {
            Completion c;
            const auto& choice = j.at("choices").at(0);
            c.text = choice.at("message").at("content").get<std::string>();
            c.finish_reason = choice.value("finish_reason", "stop");
            if (j.contains("usage")) {
                c.usage.prompt = j["usage"].value("prompt_tokens", int64_t{0});
                c.usage.completion = j["usage"].value("completion_tokens", int64_t{0});
            }
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("response shape unexpected: ") + e.what(), body);
        }
    }

    /// "https://host:port/v1" -> {"https://host:port", "/v1"}
    static std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
        const auto scheme_end = endpoint.find("://");
        if (scheme_end == std::string::npos)
            throw ConfigError("endpoint must include a scheme: " + endpoint);
        const auto path_start = endpoint.find('/', scheme_end + 3);
        if (path_start == std::string::npos) return {endpoint, ""};
        std::string prefix = endpoint.substr(path_start);
        while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        return {endpoint.substr(0, path_start), prefix};
    }

private:
    int timeout_seconds_;
};

}  // namespace gfaudit
