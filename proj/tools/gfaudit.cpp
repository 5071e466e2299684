// Command-line front end: evaluate / mitigate / report / validate / sample.

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gfaudit/catalog.hpp"
#include "gfaudit/gateway.hpp"
#include "gfaudit/http_provider.hpp"
#include "gfaudit/judge.hpp"
#include "gfaudit/report.hpp"
#include "gfaudit/runner.hpp"

namespace {

namespace fs = std::filesystem;
using namespace gfaudit;

struct CommonArgs {
    std::string model;
    std::string task = "statement-organization";
    std::string catalog = "data/catalog.tsv";
    std::vector<std::string> dimensions;
    size_t targets_per_dim = 20;
    size_t attrs_per_dim = 100;
    uint64_t seed = 0;
    std::string judge_model = "openai:gpt-4o";
    size_t concurrency = 4;
    std::string cache_dir;
    std::string out = "out";
    std::string mock;
    int samples_per_point = 1;
    std::string phrases;
    std::vector<std::string> register_dims;
    std::string endpoint = "https://api.openai.com/v1";
    std::string credential_env = "OPENAI_API_KEY";
    std::string judge_endpoint = "https://api.openai.com/v1";
    std::string judge_credential_env = "OPENAI_API_KEY";
};

void add_common_flags(CLI::App* sub, CommonArgs& a) {
    sub->set_config("--config", "", "config file mirroring these flags; flags win");
    sub->add_option("--model", a.model, "model spec, provider:name")->required();
    sub->add_option("--task", a.task,
                    "statement-organization | grammar-correction | situation-description");
    sub->add_option("--catalog", a.catalog, "term catalog TSV");
    sub->add_option("--dimensions", a.dimensions, "dimension codes to audit (default: all)")
        ->delimiter(',');
    sub->add_option("--targets-per-dim", a.targets_per_dim, "targets sampled per dimension");
    sub->add_option("--attrs-per-dim", a.attrs_per_dim, "attributes sampled per dimension");
    sub->add_option("--seed", a.seed, "sampling seed");
    sub->add_option("--judge-model", a.judge_model, "judge spec, provider:name");
    sub->add_option("--concurrency", a.concurrency, "max in-flight model calls");
    sub->add_option("--cache-dir", a.cache_dir, "completion cache dir (default: <out>/cache)");
    sub->add_option("--out", a.out, "output base directory");
    sub->add_option("--mock", a.mock, "scripted-provider JSON; serves model and judge");
    sub->add_option("--samples-per-point", a.samples_per_point, "completions per datapoint");
    sub->add_option("--phrases", a.phrases, "declination phrase file, one per line");
    sub->add_option("--register-dimension", a.register_dims,
                    "extra dimension as CODE=Display Name (repeatable)");
    sub->add_option("--endpoint", a.endpoint, "model endpoint base URL");
    sub->add_option("--credential-env", a.credential_env, "env var with the model API key");
    sub->add_option("--judge-endpoint", a.judge_endpoint, "judge endpoint base URL");
    sub->add_option("--judge-credential-env", a.judge_credential_env,
                    "env var with the judge API key");
}

ModelSpec parse_model_spec(const std::string& text, ModelSpec base, bool mock) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
        base.provider = mock ? "scripted" : base.provider;
        base.model = text;
    } else {
        base.provider = text.substr(0, colon);
        base.model = text.substr(colon + 1);
    }
    if (mock) base.provider = "scripted";
    if (base.model.empty()) throw ConfigError("model spec has no model name: " + text);
    return base;
}

DimensionRegistry build_registry(const std::vector<std::string>& extra) {
    DimensionRegistry reg = DimensionRegistry::builtin();
    for (const auto& spec : extra) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("--register-dimension expects CODE=Name, got: " + spec);
        reg.register_extension(spec.substr(0, eq), spec.substr(eq + 1));
    }
    return reg;
}

struct Harness {
    std::unique_ptr<Provider> provider;
    std::unique_ptr<CompletionCache> cache;
    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<Judge> judge;
};

Harness build_harness(const CommonArgs& a) {
    Harness h;
    if (!a.mock.empty())
        h.provider = std::make_unique<ScriptedProvider>(ScriptedProvider::rules_from_file(a.mock));
    else
        h.provider = std::make_unique<ChatHttpProvider>();

    const std::string cache_dir = a.cache_dir.empty() ? a.out + "/cache" : a.cache_dir;
    fs::create_directories(cache_dir);
    h.cache = std::make_unique<CompletionCache>(cache_dir);
    h.gateway = std::make_unique<Gateway>(*h.provider, h.cache.get());

    JudgeConfig jc = JudgeConfig::builtin();
    jc.judge.endpoint = a.judge_endpoint;
    jc.judge.credential_env = a.judge_credential_env;
    jc.judge = parse_model_spec(a.judge_model, jc.judge, !a.mock.empty());
    if (!a.phrases.empty()) jc.decline_phrases = load_phrase_file(a.phrases);
    h.judge = std::make_unique<Judge>(*h.gateway, jc);
    return h;
}

RunConfig build_run_config(const CommonArgs& a) {
    RunConfig cfg;
    ModelSpec base;
    base.provider = "openai";
    base.endpoint = a.endpoint;
    base.credential_env = a.credential_env;
    cfg.model = parse_model_spec(a.model, base, !a.mock.empty());
    cfg.task = task_from_string(a.task);
    cfg.plan.seed = a.seed;
    cfg.plan.targets_per_dimension = a.targets_per_dim;
    cfg.plan.attributes_per_dimension = a.attrs_per_dim;
    if (!a.dimensions.empty()) cfg.plan.dimension_filter = a.dimensions;
    cfg.samples_per_point = a.samples_per_point;
    cfg.concurrency = a.concurrency;
    cfg.out_dir = a.out;
    return cfg;
}

int do_evaluate(const CommonArgs& a) {
    const auto registry = build_registry(a.register_dims);
    const auto loaded = load_catalog_file(a.catalog, registry);
    Harness h = build_harness(a);
    const RunOutcome out = run_audit(loaded.catalog, build_run_config(a), *h.gateway, *h.judge,
                                     std::cout);
    std::cout << "run_dir=" << out.run_dir << "\n";
    return out.exit_code;
}

int do_mitigate(const CommonArgs& a, const std::string& baseline_run, bool paired,
                double epsilon) {
    if (baseline_run.empty() && !paired)
        throw ConfigError("mitigate needs --baseline-run <id> or --paired");
    const auto registry = build_registry(a.register_dims);
    const auto loaded = load_catalog_file(a.catalog, registry);
    Harness h = build_harness(a);

    int worst = kExitOk;
    std::string base_id = baseline_run;
    if (paired) {
        const RunOutcome base = run_audit(loaded.catalog, build_run_config(a), *h.gateway,
                                          *h.judge, std::cout);
        base_id = base.manifest.run_id;
        worst = std::max(worst, base.exit_code);
    } else {
        load_run(a.out, base_id);  // must already exist
    }

    RunConfig mit = build_run_config(a);
    mit.task = TaskKind::GfThink;
    mit.baseline_run = base_id;
    const RunOutcome out = run_audit(loaded.catalog, mit, *h.gateway, *h.judge, std::cout);
    worst = std::max(worst, out.exit_code);

    ReportOptions opt;
    opt.epsilon = epsilon;
    write_report_files(build_report(load_runs(a.out, {base_id, out.manifest.run_id}), opt),
                       out.run_dir + "/report");
    std::cout << "run_dir=" << out.run_dir << "\n";
    return worst;
}

int do_report(const std::string& runs_dir, const std::vector<std::string>& ids, double epsilon,
              double alpha, const std::string& out_dir) {
    ReportOptions opt;
    opt.epsilon = epsilon;
    opt.alpha = alpha;
    write_report_files(build_report(load_runs(runs_dir, ids), opt), out_dir);
    std::cout << "report_dir=" << out_dir << "\n";
    return kExitOk;
}

int do_validate(const std::string& catalog_path, const std::string& stats_path,
                const std::vector<std::string>& register_dims) {
    const auto registry = build_registry(register_dims);
    const auto loaded = load_catalog_file(catalog_path, registry);
    const TermCatalog& cat = loaded.catalog;
    std::cout << "dimension\ttargets\tattributes\tdatapoints\n";
    uint64_t t_sum = 0, a_sum = 0, c_sum = 0;
    for (const auto& code : cat.dimension_codes()) {
        const auto t = cat.targets(code).size();
        const auto a = cat.attributes(code).size();
        const auto c = cartesian_count(cat, code);
        std::cout << code << '\t' << t << '\t' << a << '\t' << c << '\n';
        t_sum += t;
        a_sum += a;
        c_sum += c;
    }
    std::cout << "SUM\t" << t_sum << '\t' << a_sum << '\t' << c_sum << '\n';
    if (loaded.duplicate_rows > 0)
        std::cout << "note: " << loaded.duplicate_rows << " duplicate rows collapsed\n";
    if (!stats_path.empty()) {
        const auto warnings = validate_against_stats(cat, load_stats_claims_file(stats_path));
        for (const auto& w : warnings) std::cout << "warning: " << w << '\n';
        std::cout << (warnings.empty() ? "claimed stats match the catalog\n"
                                       : "claimed stats disagree with the catalog\n");
    }
    return kExitOk;
}

int do_sample(const std::string& catalog_path, const SamplePlan& plan, const std::string& out,
              const std::vector<std::string>& register_dims) {
    const auto registry = build_registry(register_dims);
    const auto loaded = load_catalog_file(catalog_path, registry);
    const auto points = sample(loaded.catalog, plan);
    if (out.empty() || out == "-") {
        write_sample_manifest(points, std::cout);
    } else {
        std::ofstream f(out);
        if (!f) throw ConfigError("cannot write sample manifest: " + out);
        write_sample_manifest(points, f);
        std::cout << "sampled " << points.size() << " datapoints -> " << out << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairness audit harness: prompt a model across group terms, judge the "
                 "replies, and measure how evenly groups are treated"};
    app.require_subcommand(1);

    CommonArgs eval_args;
    CLI::App* eval = app.add_subcommand("evaluate", "run an audit and score every reply");
    add_common_flags(eval, eval_args);

    CommonArgs mit_args;
    std::string baseline_run;
    bool paired = false;
    double mit_epsilon = 0.05;
    CLI::App* mit = app.add_subcommand(
        "mitigate", "re-run with staged reasoning and compare against a baseline");
    add_common_flags(mit, mit_args);
    mit->add_option("--baseline-run", baseline_run, "existing baseline run id");
    mit->add_flag("--paired", paired, "run baseline and mitigation back to back");
    mit->add_option("--epsilon", mit_epsilon, "pairwise mean-gap tolerance");

    std::string rep_runs_dir = "out", rep_out = "out/report";
    std::vector<std::string> rep_ids;
    double rep_epsilon = 0.05, rep_alpha = 0.05;
    CLI::App* rep = app.add_subcommand("report", "rebuild tables from recorded runs");
    rep->add_option("--runs", rep_ids, "run ids to include")->required()->delimiter(',');
    rep->add_option("--runs-dir", rep_runs_dir, "directory holding the runs");
    rep->add_option("--epsilon", rep_epsilon, "pairwise mean-gap tolerance");
    rep->add_option("--alpha", rep_alpha, "significance level");
    rep->add_option("--out", rep_out, "report output directory");

    std::string val_catalog = "data/catalog.tsv", val_stats;
    std::vector<std::string> val_register;
    CLI::App* val = app.add_subcommand("validate", "check a catalog, optionally against "
                                                   "claimed per-dimension statistics");
    val->add_option("--catalog", val_catalog, "term catalog TSV");
    val->add_option("--against-stats", val_stats, "claimed statistics TSV");
    val->add_option("--register-dimension", val_register, "extra dimension as CODE=Name");

    std::string smp_catalog = "data/catalog.tsv", smp_out;
    SamplePlan smp_plan;
    std::vector<std::string> smp_dims, smp_register;
    CLI::App* smp = app.add_subcommand("sample", "write the audit sample for a seed");
    smp->add_option("--catalog", smp_catalog, "term catalog TSV");
    smp->add_option("--seed", smp_plan.seed, "sampling seed");
    smp->add_option("--targets-per-dim", smp_plan.targets_per_dimension, "targets per dimension");
    smp->add_option("--attrs-per-dim", smp_plan.attributes_per_dimension,
                    "attributes per dimension");
    smp->add_option("--dimensions", smp_dims, "dimension codes")->delimiter(',');
    smp->add_option("--register-dimension", smp_register, "extra dimension as CODE=Name");
    smp->add_option("--out", smp_out, "output file ('-' for stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : gfaudit::kExitConfig;
    }

    try {
        if (eval->parsed()) return do_evaluate(eval_args);
        if (mit->parsed()) return do_mitigate(mit_args, baseline_run, paired, mit_epsilon);
        if (rep->parsed()) return do_report(rep_runs_dir, rep_ids, rep_epsilon, rep_alpha, rep_out);
        if (val->parsed()) return do_validate(val_catalog, val_stats, val_register);
        if (smp->parsed()) {
            if (!smp_dims.empty()) smp_plan.dimension_filter = smp_dims;
            return do_sample(smp_catalog, smp_plan, smp_out, smp_register);
        }
    } catch (const gfaudit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return gfaudit::kExitConfig;
    } catch (const gfaudit::CatalogError& e) {
        std::cerr << "catalog error: " << e.what() << "\n";
        return gfaudit::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return gfaudit::kExitConfig;
}
