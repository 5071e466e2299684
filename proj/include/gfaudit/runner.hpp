#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "gfaudit/catalog.hpp"
#include "gfaudit/gateway.hpp"
#include "gfaudit/judge.hpp"
#include "gfaudit/mitigation.hpp"
#include "gfaudit/records.hpp"
#include "gfaudit/report.hpp"

namespace gfaudit {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes shared by the runner and the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPartial = 3;
inline constexpr int kExitUnusable = 4;

struct RunConfig {
    ModelSpec model;
    TaskKind task = TaskKind::StatementOrganization;
    SamplePlan plan;
    int samples_per_point = 1;
    size_t concurrency = 4;
    std::string out_dir = "out";
    std::string baseline_run;  // links a staged-reasoning run to its baseline
};

struct RunOutcome {
    RunManifest manifest;
    std::string run_dir;
    size_t planned = 0;
    size_t preexisting = 0;
    size_t appended = 0;
    size_t failed_calls = 0;
    size_t unusable = 0;
    uint64_t model_calls = 0;  // provider-served task completions this invocation
    int exit_code = kExitOk;
};

inline void write_report_files(const Report& rep, const std::string& dir) {
    namespace fs = std::filesystem;
    for (const auto& f : rep.files) {
        const fs::path path = fs::path(dir) / f.name;
        fs::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ConfigError("cannot write report file: " + path.string());
        out << f.content;
    }
}

/// Samples the audit set, completes every missing datapoint, judges the
/// replies, and appends records in sample order. Safe to re-invoke: existing
/// records are kept, only the gap is filled.
inline RunOutcome run_audit(const TermCatalog& catalog, const RunConfig& cfg, Gateway& gateway,
                            Judge& judge, std::ostream& log) {
    namespace fs = std::filesystem;
    if (cfg.samples_per_point < 1) throw ConfigError("samples_per_point must be >= 1");
    if (cfg.concurrency < 1) throw ConfigError("concurrency must be >= 1");

    RunOutcome outcome;
    RunManifest& manifest = outcome.manifest;
    manifest.model = cfg.model;
    manifest.judge = judge.config().judge;
    manifest.task = cfg.task;
    manifest.plan = cfg.plan;
    manifest.samples_per_point = cfg.samples_per_point;
    manifest.baseline_run = cfg.baseline_run;
    manifest.catalog_digest = sha256_hex(catalog.content_key());
    const PromptTemplate tmpl = builtin_template(cfg.task);
    manifest.template_version = tmpl.version;
    manifest.judge_template_versions = judge.config().toxicity_prompt.version + "," +
                                       judge.config().sentiment_prompt.version + "," +
                                       judge.config().vigilance_prompt.version;
    manifest.judge_config_digest = judge.config().digest();
    if (cfg.plan.dimension_filter)
        manifest.dimensions.assign(cfg.plan.dimension_filter->begin(),
                                   cfg.plan.dimension_filter->end());
    manifest.seal(kToolVersion);

    outcome.run_dir = (fs::path(cfg.out_dir) / manifest.run_id).string();
    fs::create_directories(outcome.run_dir);
    save_manifest(outcome.run_dir + "/manifest.json", manifest);

    const std::vector<DataPoint> points = sample(catalog, cfg.plan);
    {
        std::ofstream sm(outcome.run_dir + "/sample.tsv");
        write_sample_manifest(points, sm);
    }

    RecordStore store(outcome.run_dir + "/records.jsonl");

    struct Pending {
        DataPoint point;
        int sample_index;
    };
    std::vector<Pending> pending;
    outcome.planned = points.size() * static_cast<size_t>(cfg.samples_per_point);
    for (const auto& p : points) {
        for (int s = 0; s < cfg.samples_per_point; ++s) {
            if (store.contains(p, s)) ++outcome.preexisting;
            else pending.push_back({p, s});
        }
    }
    log << "run " << manifest.run_id << ": " << outcome.planned << " datapoints, "
        << outcome.preexisting << " already recorded, " << pending.size() << " to do\n";

    const bool staged = (cfg.task == TaskKind::GfThink);
    const size_t chunk = std::max<size_t>(cfg.concurrency * 4, 16);
    for (size_t base = 0; base < pending.size(); base += chunk) {
        const size_t end = std::min(pending.size(), base + chunk);
        std::vector<RenderedPrompt> prompts;
        prompts.reserve(end - base);
        for (size_t i = base; i < end; ++i) prompts.push_back(render(tmpl, pending[i].point));

        const auto results = gateway.complete_batch(cfg.model, prompts, cfg.concurrency);
        for (size_t i = 0; i < results.size(); ++i) {
            EvaluationRecord rec;
            rec.run_id = manifest.run_id;
            rec.point = pending[base + i].point;
            rec.sample_index = pending[base + i].sample_index;
            rec.prompt_digest = sha256_hex(prompts[i].text);
            if (!results[i].ok()) {
                rec.response_ok = false;
                rec.error = results[i].error;
                rec.flags.push_back("model_call_failed");
                ++outcome.model_calls;
            } else {
                const Completion& c = results[i].value();
                rec.response = c.text;
                rec.latency_ms = c.latency_ms;
                if (!c.cache_hit) ++outcome.model_calls;
                std::string to_judge = rec.response;
                if (staged) {
                    GfThinkTranscript t = parse_gfthink(rec.response);
                    rec.flags = t.flags;
                    to_judge = t.final_reply;
                }
                rec.scores = judge.score_all(to_judge);
                rec.flags.insert(rec.flags.end(), rec.scores.flags.begin(),
                                 rec.scores.flags.end());
            }
            store.append(rec);
            ++outcome.appended;
        }
    }

    size_t usable = 0, flagged = 0;
    for (const auto& r : store.records()) {
        if (r.usable()) ++usable;
        else ++outcome.unusable;
        if (!r.flags.empty()) ++flagged;
        if (!r.response_ok) ++outcome.failed_calls;
    }
    if (usable == 0) outcome.exit_code = kExitUnusable;
    else if (outcome.unusable > 0 || flagged > 0) outcome.exit_code = kExitPartial;

    write_report_files(build_report({RunData{manifest, store.records()}}, ReportOptions{}),
                       outcome.run_dir + "/report");
    manifest.finished_at = iso_utc_now();
    save_manifest(outcome.run_dir + "/manifest.json", manifest);

    log << "run " << manifest.run_id << ": appended=" << outcome.appended
        << " usable=" << usable << " unusable=" << outcome.unusable
        << " model_calls=" << outcome.model_calls << "\n";
    return outcome;
}

inline RunData load_run(const std::string& base_dir, const std::string& run_id) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(base_dir) / run_id;
    if (!fs::exists(dir / "manifest.json"))
        throw ConfigError("run " + run_id + " not found under " + base_dir);
    RunData data;
    data.manifest = load_manifest((dir / "manifest.json").string());
    data.records = RecordStore::load((dir / "records.jsonl").string());
    return data;
}

inline std::vector<RunData> load_runs(const std::string& base_dir,
                                      const std::vector<std::string>& run_ids) {
    std::vector<RunData> runs;
    runs.reserve(run_ids.size());
    for (const auto& id : run_ids) runs.push_back(load_run(base_dir, id));
    return runs;
}

}  // namespace gfaudit
