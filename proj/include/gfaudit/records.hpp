#pragma once

#include <ctime>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfaudit/catalog.hpp"
#include "gfaudit/digest.hpp"
#include "gfaudit/error.hpp"
#include "gfaudit/gateway.hpp"
#include "gfaudit/judge.hpp"
#include "gfaudit/util.hpp"

namespace gfaudit {

inline std::string iso_utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Everything that determines a run's outputs, pinned up front. The digest (and
// therefore the run id) covers the knobs but never wall-clock state, so the
// same configuration always resumes the same run directory.
struct RunManifest {
    std::string run_id;
    std::string tool_version;
    ModelSpec model;
    ModelSpec judge;
    TaskKind task = TaskKind::StatementOrganization;
    SamplePlan plan;
    std::vector<std::string> dimensions;
    int samples_per_point = 1;
    std::string catalog_digest;
    std::string template_version;
    std::string judge_template_versions;
    std::string judge_config_digest;
    std::string config_digest;
    std::string created_at;     // informational only
    std::string finished_at;    // informational only
    std::string baseline_run;   // set on mitigation runs

    void seal(const std::string& version) {
        tool_version = version;
        std::vector<std::string> fields = {
            model.provider, model.model, fmt_fixed(model.temperature, 6),
            std::to_string(model.max_tokens),
            judge.provider, judge.model, fmt_fixed(judge.temperature, 6),
            std::to_string(judge.max_tokens),
            to_string(task),
            std::to_string(plan.seed),
            std::to_string(plan.targets_per_dimension),
            std::to_string(plan.attributes_per_dimension),
            std::to_string(samples_per_point),
            catalog_digest, template_version, judge_template_versions, judge_config_digest,
            baseline_run};
        for (const auto& d : dimensions) fields.push_back(d);
        config_digest = sha256_hex_fields(fields);
        run_id = "run-" + config_digest.substr(0, 12);
        created_at = iso_utc_now();
    }
};

inline nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
    nlohmann::ordered_json j;
    j["run_id"] = m.run_id;
    j["tool_version"] = m.tool_version;
    j["model"] = {{"provider", m.model.provider},   {"model", m.model.model},
                  {"temperature", m.model.temperature}, {"max_tokens", m.model.max_tokens},
                  {"endpoint", m.model.endpoint},   {"credential_env", m.model.credential_env}};
    j["judge"] = {{"provider", m.judge.provider},   {"model", m.judge.model},
                  {"temperature", m.judge.temperature}, {"max_tokens", m.judge.max_tokens},
                  {"endpoint", m.judge.endpoint},   {"credential_env", m.judge.credential_env}};
    j["task"] = to_string(m.task);
    j["seed"] = m.plan.seed;
    j["targets_per_dimension"] = m.plan.targets_per_dimension;
    j["attributes_per_dimension"] = m.plan.attributes_per_dimension;
    j["samples_per_point"] = m.samples_per_point;
    j["dimensions"] = m.dimensions;
    j["catalog_digest"] = m.catalog_digest;
    j["template_version"] = m.template_version;
    j["judge_template_versions"] = m.judge_template_versions;
    j["judge_config_digest"] = m.judge_config_digest;
    j["config_digest"] = m.config_digest;
    j["created_at"] = m.created_at;
    j["finished_at"] = m.finished_at;
    j["baseline_run"] = m.baseline_run;
    return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.provider = j.value("provider", "");
    s.model = j.value("model", "");
    s.temperature = j.value("temperature", 0.0);
    s.max_tokens = j.value("max_tokens", 1024);
    s.endpoint = j.value("endpoint", "");
    s.credential_env = j.value("credential_env", "");
    return s;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.tool_version = j.value("tool_version", "");
    m.model = model_spec_from_json(j.at("model"));
    m.judge = model_spec_from_json(j.at("judge"));
    m.task = task_from_string(j.at("task").get<std::string>());
    m.plan.seed = j.value("seed", uint64_t{0});
    m.plan.targets_per_dimension = j.value("targets_per_dimension", size_t{20});
    m.plan.attributes_per_dimension = j.value("attributes_per_dimension", size_t{100});
    m.samples_per_point = j.value("samples_per_point", 1);
    m.dimensions = j.value("dimensions", std::vector<std::string>{});
    if (!m.dimensions.empty()) m.plan.dimension_filter = m.dimensions;
    m.catalog_digest = j.value("catalog_digest", "");
    m.template_version = j.value("template_version", "");
    m.judge_template_versions = j.value("judge_template_versions", "");
    m.judge_config_digest = j.value("judge_config_digest", "");
    m.config_digest = j.value("config_digest", "");
    m.created_at = j.value("created_at", "");
    m.finished_at = j.value("finished_at", "");
    m.baseline_run = j.value("baseline_run", "");
    return m;
}

inline void save_manifest(const std::string& path, const RunManifest& m) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write manifest: " + path);
    out << manifest_to_json(m).dump(2) << '\n';
}

inline RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest " + path + " is not valid JSON: " + e.what());
    }
    return manifest_from_json(j);
}

// ---------------------------------------------------------------------------
// One scored datapoint. Records persist everything needed to rebuild every
// report without touching a model again.
// ---------------------------------------------------------------------------

struct EvaluationRecord {
    std::string run_id;
    DataPoint point;
    int sample_index = 0;
    std::string prompt_digest;
    std::string response;
    bool response_ok = true;  // false: the model call failed and scores are absent
    std::string error;
    JudgeScores scores;
    double latency_ms = 0.0;
    std::vector<std::string> flags;

    bool usable() const { return response_ok && scores.usable(); }

    std::string key() const {
        return point.dimension + '\x1f' + point.target + '\x1f' + point.attribute + '\x1f' +
               std::to_string(sample_index);
    }
};

inline nlohmann::ordered_json record_to_json(const EvaluationRecord& r) {
    nlohmann::ordered_json j;
    j["run_id"] = r.run_id;
    j["dimension"] = r.point.dimension;
    j["target"] = r.point.target;
    j["attribute"] = r.point.attribute;
    j["sample_index"] = r.sample_index;
    j["prompt_digest"] = r.prompt_digest;
    j["response"] = r.response;
    j["response_ok"] = r.response_ok;
    j["error"] = r.error;
    j["tau"] = r.scores.tau ? nlohmann::ordered_json(*r.scores.tau) : nlohmann::ordered_json(nullptr);
    j["sigma"] =
        r.scores.sigma ? nlohmann::ordered_json(*r.scores.sigma) : nlohmann::ordered_json(nullptr);
    j["nu"] = r.scores.nu ? nlohmann::ordered_json(*r.scores.nu) : nlohmann::ordered_json(nullptr);
    j["lexical_decline"] = r.scores.lexical_decline;
    j["judge_decline"] = r.scores.judge_decline
                             ? nlohmann::ordered_json(*r.scores.judge_decline)
                             : nlohmann::ordered_json(nullptr);
    j["tau_raw"] = r.scores.tau_raw;
    j["sigma_raw"] = r.scores.sigma_raw;
    j["nu_raw"] = r.scores.nu_raw;
    j["latency_ms"] = r.latency_ms;
    j["flags"] = r.flags;
    return j;
}

inline EvaluationRecord record_from_json(const nlohmann::json& j) {
    EvaluationRecord r;
    r.run_id = j.value("run_id", "");
    r.point.dimension = j.at("dimension").get<std::string>();
    r.point.target = j.at("target").get<std::string>();
    r.point.attribute = j.at("attribute").get<std::string>();
    r.sample_index = j.value("sample_index", 0);
    r.prompt_digest = j.value("prompt_digest", "");
    r.response = j.value("response", "");
    r.response_ok = j.value("response_ok", true);
    r.error = j.value("error", "");
    if (j.contains("tau") && !j["tau"].is_null()) r.scores.tau = j["tau"].get<double>();
    if (j.contains("sigma") && !j["sigma"].is_null()) r.scores.sigma = j["sigma"].get<int>();
    if (j.contains("nu") && !j["nu"].is_null()) r.scores.nu = j["nu"].get<int>();
    r.scores.lexical_decline = j.value("lexical_decline", false);
    if (j.contains("judge_decline") && !j["judge_decline"].is_null())
        r.scores.judge_decline = j["judge_decline"].get<bool>();
    r.scores.tau_raw = j.value("tau_raw", "");
    r.scores.sigma_raw = j.value("sigma_raw", "");
    r.scores.nu_raw = j.value("nu_raw", "");
    r.latency_ms = j.value("latency_ms", 0.0);
    r.flags = j.value("flags", std::vector<std::string>{});
    return r;
}

/// Append-only JSONL store. Loading tolerates a truncated final line so an
/// interrupted run can pick up where it left off.
class RecordStore {
public:
    explicit RecordStore(std::string path) : path_(std::move(path)) {
        std::ifstream in(path_);
        if (!in) return;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                if (in.peek() != EOF)
                    throw ConfigError(path_ + ":" + std::to_string(lineno) +
                                      ": corrupt record line in the middle of the store");
                break;  // truncated tail from an interrupted append
            }
            EvaluationRecord r = record_from_json(j);
            seen_.insert(r.key());
            records_.push_back(std::move(r));
        }
    }

    bool contains(const DataPoint& p, int sample_index) const {
        EvaluationRecord probe;
        probe.point = p;
        probe.sample_index = sample_index;
        return seen_.count(probe.key()) > 0;
    }

    void append(const EvaluationRecord& r) {
        std::ofstream out(path_, std::ios::app);
        if (!out) throw ConfigError("cannot append to record store: " + path_);
        out << record_to_json(r).dump() << '\n';
        seen_.insert(r.key());
        records_.push_back(r);
    }

    const std::vector<EvaluationRecord>& records() const { return records_; }
    size_t size() const { return records_.size(); }
    const std::string& path() const { return path_; }

    static std::vector<EvaluationRecord> load(const std::string& path) {
        return RecordStore(path).records_;
    }

private:
    std::string path_;
    std::vector<EvaluationRecord> records_;
    std::unordered_set<std::string> seen_;
};

}  // namespace gfaudit
