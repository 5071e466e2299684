#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfaudit/digest.hpp"
#include "gfaudit/error.hpp"
#include "gfaudit/prompts.hpp"
#include "gfaudit/rng.hpp"
#include "gfaudit/util.hpp"

namespace gfaudit {

struct ModelSpec {
    std::string provider;  // "openai", "scripted", ...
    std::string model;
    double temperature = 0.0;  // deterministic decoding by default
    int max_tokens = 1024;
    std::string endpoint;        // base locator for http providers, e.g. https://host/v1
    std::string credential_env;  // name of the env var holding the API key
};

struct TokenUsage {
    int64_t prompt = 0;
    int64_t completion = 0;
};

struct Completion {
    std::string text;  // verbatim model output, unmodified
    std::string finish_reason = "stop";
    TokenUsage usage;
    double latency_ms = 0.0;
    bool cache_hit = false;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string id() const = 0;
    virtual Completion generate(const ModelSpec& spec, const std::string& prompt) = 0;
};

// ---------------------------------------------------------------------------
// Scripted provider: deterministic, zero-network stand-in for tests and --mock.
// ---------------------------------------------------------------------------

struct ScriptRule {
    std::optional<std::string> exact;
    std::optional<std::string> contains;  // no predicate at all = catch-all
    bool echo = false;                    // respond with the prompt itself
    std::string response;
    std::string finish_reason = "stop";
    int fail_times = 0;    // transient failures to emit before succeeding
    bool always_fail = false;

    bool matches(const std::string& prompt) const {
        if (exact) return prompt == *exact;
        if (contains) return prompt.find(*contains) != std::string::npos;
        return true;
    }
};

class ScriptedProvider : public Provider {
public:
    ScriptedProvider() = default;
    explicit ScriptedProvider(std::vector<ScriptRule> rules) : rules_(std::move(rules)) {
        failures_remaining_.assign(rules_.size(), 0);
        for (size_t i = 0; i < rules_.size(); ++i) failures_remaining_[i] = rules_[i].fail_times;
    }

    static std::vector<ScriptRule> rules_from_json(const nlohmann::json& j) {
        std::vector<ScriptRule> rules;
        for (const auto& r : j.at("rules")) {
            ScriptRule rule;
            if (r.contains("exact")) rule.exact = r.at("exact").get<std::string>();
            if (r.contains("contains")) rule.contains = r.at("contains").get<std::string>();
            if (r.contains("echo")) rule.echo = r.at("echo").get<bool>();
            if (r.contains("response")) rule.response = r.at("response").get<std::string>();
            if (r.contains("finish_reason")) rule.finish_reason = r.at("finish_reason").get<std::string>();
            if (r.contains("fail_times")) rule.fail_times = r.at("fail_times").get<int>();
            if (r.contains("always_fail")) rule.always_fail = r.at("always_fail").get<bool>();
            rules.push_back(std::move(rule));
        }
        return rules;
    }

    static std::vector<ScriptRule> rules_from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open mock script: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("mock script " + path + " is not valid JSON: " + e.what());
        }
        return rules_from_json(j);
    }

    static ScriptedProvider from_json(const nlohmann::json& j) {
        return ScriptedProvider(rules_from_json(j));
    }

    void add_rule(ScriptRule rule) {
        std::lock_guard lock(mu_);
        rules_.push_back(std::move(rule));
        failures_remaining_.push_back(rules_.back().fail_times);
    }

    std::string id() const override { return "scripted"; }

    Completion generate(const ModelSpec&, const std::string& prompt) override {
        std::lock_guard lock(mu_);
        ++calls_;
        for (size_t i = 0; i < rules_.size(); ++i) {
            if (!rules_[i].matches(prompt)) continue;
            if (rules_[i].always_fail) throw TransientError("scripted permanent transient failure");
            if (failures_remaining_[i] > 0) {
                --failures_remaining_[i];
                throw TransientError("scripted transient failure (" +
                                     std::to_string(rules_[i].fail_times - failures_remaining_[i]) +
                                     "/" + std::to_string(rules_[i].fail_times) + ")");
            }
            Completion c;
            c.text = rules_[i].echo ? prompt : rules_[i].response;
            c.finish_reason = rules_[i].finish_reason;
            return c;
        }
        const std::string head = prompt.substr(0, 120);
        throw ScriptedMissError("no scripted rule matches prompt: \"" + head +
                                (prompt.size() > 120 ? "...\"" : "\""));
    }

    uint64_t calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

private:
    mutable std::mutex mu_;
    std::vector<ScriptRule> rules_;
    std::vector<int> failures_remaining_;
    uint64_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Completion cache: append-only JSONL keyed by a content digest, so interrupted
// runs resume without re-charging the endpoint.
// ---------------------------------------------------------------------------

class CompletionCache {
public:
    /// In-memory only.
    CompletionCache() = default;

    /// Backed by <dir>/cache.jsonl; existing entries are loaded, later lines win.
    explicit CompletionCache(const std::string& dir) : path_(dir + "/cache.jsonl") { load(); }

    static std::string key_for(const ModelSpec& spec, const std::string& template_version,
                               const std::string& prompt_text) {
        return sha256_hex_fields({spec.provider, spec.model, template_version, prompt_text,
                                  fmt_fixed(spec.temperature, 6), std::to_string(spec.max_tokens)});
    }

    std::optional<Completion> get(const std::string& key) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        Completion c = it->second;
        c.cache_hit = true;
        return c;
    }

    void put(const std::string& key, const ModelSpec& spec, const std::string& prompt_text,
             const Completion& c) {
        std::lock_guard lock(mu_);
        entries_[key] = c;
        if (path_.empty()) return;
        nlohmann::ordered_json j;
        j["key"] = key;
        j["model"] = spec.model;
        j["prompt_digest"] = sha256_hex(prompt_text);
        j["text"] = c.text;
        j["finish_reason"] = c.finish_reason;
        j["usage"] = {{"prompt", c.usage.prompt}, {"completion", c.usage.completion}};
        j["latency_ms"] = c.latency_ms;
        j["created_unix_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                   std::chrono::system_clock::now().time_since_epoch())
                                   .count();
        std::ofstream out(path_, std::ios::app);
        out << j.dump() << '\n';
    }

    size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    void load() {
        std::ifstream in(path_);
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            // A truncated trailing line from an interrupted run is not an error.
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("key") || !j.contains("text")) continue;
            Completion c;
            c.text = j["text"].get<std::string>();
            c.finish_reason = j.value("finish_reason", "stop");
            if (j.contains("usage")) {
                c.usage.prompt = j["usage"].value("prompt", int64_t{0});
                c.usage.completion = j["usage"].value("completion", int64_t{0});
            }
            c.latency_ms = j.value("latency_ms", 0.0);
            entries_[j["key"].get<std::string>()] = c;
        }
    }

    mutable std::mutex mu_;
    std::string path_;
    std::unordered_map<std::string, Completion> entries_;
};

// ---------------------------------------------------------------------------
// Gateway: cache + retry + bounded-concurrency batching over a provider.
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds initial_delay{1000};
    double factor = 2.0;
    double jitter = 0.5;  // +/- fraction of the nominal delay
};

struct CompletionResult {
    std::optional<Completion> completion;
    std::string error;

    bool ok() const { return completion.has_value(); }
    const Completion& value() const {
        if (!completion) throw std::logic_error("CompletionResult has no value: " + error);
        return *completion;
    }
};

class Gateway {
public:
    Gateway(Provider& provider, CompletionCache* cache, RetryPolicy retry = {})
        : provider_(provider), cache_(cache), retry_(retry) {}

    /// Cache hit returns the stored completion with no provider traffic.
    /// Transient failures are retried with jittered exponential backoff.
    Completion complete(const ModelSpec& spec, const RenderedPrompt& prompt) {
        const std::string key = CompletionCache::key_for(spec, prompt.template_version, prompt.text);
        if (cache_) {
            if (auto hit = cache_->get(key)) return *hit;
        }
        SplitMix64 jitter_rng(fnv1a64(key));
        std::string last_cause;
        for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
            try {
                const auto t0 = std::chrono::steady_clock::now();
                Completion c = provider_.generate(spec, prompt.text);
                provider_calls_.fetch_add(1, std::memory_order_relaxed);
                if (c.latency_ms == 0.0 && provider_.id() != "scripted") {
                    c.latency_ms = std::chrono::duration<double, std::milli>(
                                       std::chrono::steady_clock::now() - t0)
                                       .count();
                }
                if (cache_) cache_->put(key, spec, prompt.text, c);
                return c;
            } catch (const TransientError& e) {
                provider_calls_.fetch_add(1, std::memory_order_relaxed);
                last_cause = e.what();
                if (attempt == retry_.max_attempts) break;
                std::this_thread::sleep_for(backoff_delay(attempt, jitter_rng));
            }
            // AuthError, ProtocolError, ScriptedMissError propagate immediately.
        }
        throw TransportError("attempt budget (" + std::to_string(retry_.max_attempts) +
                             ") exhausted; last cause: " + last_cause);
    }

    /// Results come back in input order; per-item failures are captured in place
    /// and never abort the batch.
    std::vector<CompletionResult> complete_batch(const ModelSpec& spec,
                                                 const std::vector<RenderedPrompt>& prompts,
                                                 size_t concurrency_limit) {
        if (concurrency_limit < 1) throw ConfigError("concurrency_limit must be >= 1");
        std::vector<CompletionResult> results(prompts.size());
        std::atomic<size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= prompts.size()) return;
                try {
                    results[i].completion = complete(spec, prompts[i]);
                } catch (const std::exception& e) {
                    results[i].error = e.what();
                }
            }
        };
        const size_t n_workers = std::min(concurrency_limit, prompts.size());
        if (n_workers <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(n_workers);
            for (size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        return results;
    }

    /// Number of actual provider invocations (retries included, cache hits not).
    uint64_t provider_calls() const { return provider_calls_.load(); }

private:
    std::chrono::milliseconds backoff_delay(int attempt, SplitMix64& rng) const {
        double ms = static_cast<double>(retry_.initial_delay.count());
        for (int i = 1; i < attempt; ++i) ms *= retry_.factor;
        const double u = static_cast<double>(rng.next() >> 11) * 0x1.0p-53;  // [0,1)
        ms *= 1.0 + retry_.jitter * (2.0 * u - 1.0);
        return std::chrono::milliseconds(static_cast<int64_t>(ms < 0 ? 0 : ms));
    }

    Provider& provider_;
    CompletionCache* cache_;
    RetryPolicy retry_;
    std::atomic<uint64_t> provider_calls_{0};
};

}  // namespace gfaudit
