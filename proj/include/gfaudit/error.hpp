#pragma once

#include <stdexcept>
#include <string>

namespace gfaudit {

// Bad input data (catalog rows, stats files, manifests).
struct CatalogError : std::runtime_error {
    explicit CatalogError(const std::string& what) : std::runtime_error(what) {}
};

// Bad run configuration (flags, plans, missing credentials). Maps to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Transport-level failures surfaced by the gateway.
struct GatewayError : std::runtime_error {
    explicit GatewayError(const std::string& what) : std::runtime_error(what) {}
};

// Non-retryable: the endpoint rejected our credentials.
struct AuthError : GatewayError {
    explicit AuthError(const std::string& what) : GatewayError(what) {}
};

// Retryable failure class (rate limits, 5xx, timeouts).
struct TransientError : GatewayError {
    explicit TransientError(const std::string& what) : GatewayError(what) {}
};

// Retry budget exhausted; carries the last cause in the message.
struct TransportError : GatewayError {
    explicit TransportError(const std::string& what) : GatewayError(what) {}
};

// Response arrived but did not match the expected schema.
struct ProtocolError : GatewayError {
    std::string raw_payload;
    ProtocolError(const std::string& what, std::string payload)
        : GatewayError(what), raw_payload(std::move(payload)) {}
};

// A scripted provider had no rule for the prompt. Signals a test bug.
struct ScriptedMissError : GatewayError {
    explicit ScriptedMissError(const std::string& what) : GatewayError(what) {}
};

// Statistics requested on inputs where they are undefined.
struct StatsError : std::runtime_error {
    explicit StatsError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gfaudit
