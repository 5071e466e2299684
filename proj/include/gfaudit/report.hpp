#pragma once

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfaudit/error.hpp"
#include "gfaudit/mitigation.hpp"
#include "gfaudit/records.hpp"
#include "gfaudit/stats.hpp"
#include "gfaudit/util.hpp"

namespace gfaudit {

struct RunData {
    RunManifest manifest;
    std::vector<EvaluationRecord> records;
};

struct ReportOptions {
    double epsilon = 0.05;
    double alpha = 0.05;
    MwPolicy mw;
};

struct ReportFile {
    std::string name;
    std::string content;
};

struct Report {
    std::vector<ReportFile> files;
};

// ---------------------------------------------------------------------------
// Aggregation scaffolding. Everything downstream reads from this one pass.
// ---------------------------------------------------------------------------

struct MetricVectors {
    std::vector<double> tau;
    std::vector<double> sigma;
    std::vector<double> nu;
};

struct RunAggregates {
    std::vector<std::string> dimensions;  // sorted codes present in the records
    std::map<std::string, MetricVectors> by_dimension;
    std::map<std::string, std::map<std::string, MetricVectors>> by_target;
    std::map<std::string, size_t> records_per_dimension;
    std::map<std::string, size_t> usable_per_dimension;
    std::map<std::string, size_t> flagged_per_dimension;
    std::map<std::string, size_t> flag_histogram;
    size_t total = 0, usable = 0, flagged = 0, failed_calls = 0;
    std::vector<int> nu_all;  // usable records, for the declination rate
};

inline RunAggregates aggregate_records(const std::vector<EvaluationRecord>& records) {
    RunAggregates agg;
    std::set<std::string> dims;
    for (const auto& r : records) {
        ++agg.total;
        ++agg.records_per_dimension[r.point.dimension];
        dims.insert(r.point.dimension);
        for (const auto& f : r.flags) ++agg.flag_histogram[f];
        if (!r.response_ok) ++agg.failed_calls;
        if (!r.flags.empty()) {
            ++agg.flagged;
            ++agg.flagged_per_dimension[r.point.dimension];
        }
        if (!r.usable()) continue;
        ++agg.usable;
        ++agg.usable_per_dimension[r.point.dimension];
        auto& dvec = agg.by_dimension[r.point.dimension];
        auto& tvec = agg.by_target[r.point.dimension][r.point.target];
        const double tau = *r.scores.tau;
        const double sigma = static_cast<double>(*r.scores.sigma);
        const double nu = static_cast<double>(*r.scores.nu);
        dvec.tau.push_back(tau);
        dvec.sigma.push_back(sigma);
        dvec.nu.push_back(nu);
        tvec.tau.push_back(tau);
        tvec.sigma.push_back(sigma);
        tvec.nu.push_back(nu);
        agg.nu_all.push_back(*r.scores.nu);
    }
    agg.dimensions.assign(dims.begin(), dims.end());
    return agg;
}

struct DimensionMeans {
    std::vector<std::string> dims;  // only dimensions with usable records
    std::vector<double> tau, sigma, nu;
};

inline DimensionMeans dimension_means(const RunAggregates& agg) {
    DimensionMeans m;
    for (const auto& d : agg.dimensions) {
        auto it = agg.by_dimension.find(d);
        if (it == agg.by_dimension.end() || it->second.tau.empty()) continue;
        m.dims.push_back(d);
        m.tau.push_back(kahan_mean(it->second.tau));
        m.sigma.push_back(kahan_mean(it->second.sigma));
        m.nu.push_back(kahan_mean(it->second.nu));
    }
    return m;
}

/// Per-target means inside one dimension, targets in sorted order.
struct TargetMeans {
    std::vector<std::string> targets;
    std::vector<double> tau, sigma, nu;
};

inline TargetMeans target_means(const RunAggregates& agg, const std::string& dim) {
    TargetMeans m;
    auto it = agg.by_target.find(dim);
    if (it == agg.by_target.end()) return m;
    for (const auto& [target, vec] : it->second) {
        if (vec.tau.empty()) continue;
        m.targets.push_back(target);
        m.tau.push_back(kahan_mean(vec.tau));
        m.sigma.push_back(kahan_mean(vec.sigma));
        m.nu.push_back(kahan_mean(vec.nu));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Individual report files. All emit fixed-precision text so that regenerating
// a report from the same records is byte-identical.
// ---------------------------------------------------------------------------

namespace reportfmt {

inline std::string num(double v, int decimals = 6) {
    if (std::isnan(v)) return "na";
    return fmt_fixed(v, decimals);
}

}  // namespace reportfmt

inline std::string render_dimension_metrics(const RunAggregates& agg) {
    std::ostringstream out;
    out << "dimension\trecords\tusable\tflagged\ttoxicity_mean\tsentiment_mean\t"
           "sentiment_index\tvigilance_pct\n";
    const DimensionMeans m = dimension_means(agg);
    std::vector<double> avg_tau, avg_sigma, avg_nu;
    for (const auto& d : agg.dimensions) {
        auto total = agg.records_per_dimension.count(d) ? agg.records_per_dimension.at(d) : 0;
        auto usable = agg.usable_per_dimension.count(d) ? agg.usable_per_dimension.at(d) : 0;
        auto flagged = agg.flagged_per_dimension.count(d) ? agg.flagged_per_dimension.at(d) : 0;
        out << d << '\t' << total << '\t' << usable << '\t' << flagged << '\t';
        auto pos = std::find(m.dims.begin(), m.dims.end(), d);
        if (pos == m.dims.end()) {
            out << "na\tna\tna\tna\n";
            continue;
        }
        const size_t i = static_cast<size_t>(pos - m.dims.begin());
        out << reportfmt::num(m.tau[i]) << '\t' << reportfmt::num(m.sigma[i]) << '\t'
            << reportfmt::num(sentiment_index(m.sigma[i])) << '\t'
            << reportfmt::num(m.nu[i] * 100.0, 4) << '\n';
        avg_tau.push_back(m.tau[i]);
        avg_sigma.push_back(m.sigma[i]);
        avg_nu.push_back(m.nu[i]);
    }
    if (!avg_tau.empty()) {
        out << "AVG\t" << agg.total << '\t' << agg.usable << '\t' << agg.flagged << '\t'
            << reportfmt::num(kahan_mean(avg_tau)) << '\t' << reportfmt::num(kahan_mean(avg_sigma))
            << '\t' << reportfmt::num(sentiment_index(kahan_mean(avg_sigma))) << '\t'
            << reportfmt::num(kahan_mean(avg_nu) * 100.0, 4) << '\n';
    }
    return out.str();
}

inline std::string render_significance_matrix(const PairwiseSignificance& sig) {
    std::ostringstream out;
    out << "dimension";
    for (const auto& id : sig.ids) out << '\t' << id;
    out << '\n';
    for (size_t i = 0; i < sig.ids.size(); ++i) {
        out << sig.ids[i];
        for (size_t j = 0; j < sig.ids.size(); ++j) out << '\t' << reportfmt::num(sig.p[i][j]);
        out << '\n';
    }
    return out.str();
}

inline std::string render_radar_std(const RunAggregates& agg) {
    std::ostringstream out;
    out << "dimension\ttargets\ttoxicity_std\tsentiment_std\tvigilance_std\n";
    for (const auto& d : agg.dimensions) {
        const TargetMeans tm = target_means(agg, d);
        out << d << '\t' << tm.targets.size() << '\t';
        if (tm.targets.size() < 2) {
            out << "na\tna\tna\n";
            continue;
        }
        out << reportfmt::num(fairness_std(tm.tau)) << '\t' << reportfmt::num(fairness_std(tm.sigma))
            << '\t' << reportfmt::num(fairness_std(tm.nu)) << '\n';
    }
    return out.str();
}

inline std::string render_target_distributions(const RunAggregates& agg) {
    std::ostringstream out;
    out << "dimension\tmetric\tn_targets\tmin\tq1\tmedian\tq3\tmax\tmean\tstd\n";
    for (const auto& d : agg.dimensions) {
        const TargetMeans tm = target_means(agg, d);
        if (tm.targets.empty()) continue;
        auto row = [&](const char* metric, const std::vector<double>& vals) {
            const Distribution dist = describe(vals);
            out << d << '\t' << metric << '\t' << dist.n << '\t' << reportfmt::num(dist.min) << '\t'
                << reportfmt::num(dist.q1) << '\t' << reportfmt::num(dist.median) << '\t'
                << reportfmt::num(dist.q3) << '\t' << reportfmt::num(dist.max) << '\t'
                << reportfmt::num(dist.mean) << '\t' << reportfmt::num(dist.stddev) << '\n';
        };
        row("toxicity", tm.tau);
        row("sentiment", tm.sigma);
        row("vigilance", tm.nu);
    }
    return out.str();
}

struct FairnessSummary {
    std::string metric;
    double group_std = std::numeric_limits<double>::quiet_NaN();
    EpsilonReport eps;
};

inline std::vector<FairnessSummary> fairness_summaries(const DimensionMeans& m, double epsilon) {
    std::vector<FairnessSummary> rows;
    auto add = [&](const std::string& name, const std::vector<double>& means) {
        FairnessSummary f;
        f.metric = name;
        if (m.dims.size() >= 2) f.group_std = fairness_std(means);
        f.eps = epsilon_fairness(m.dims, means, epsilon);
        rows.push_back(std::move(f));
    };
    add("toxicity", m.tau);
    add("sentiment", m.sigma);
    add("vigilance", m.nu);
    return rows;
}

inline std::string render_fairness(const std::vector<FairnessSummary>& rows) {
    std::ostringstream out;
    out << "metric\tgroup_std\tepsilon\tepsilon_fair\tmax_gap\tviolating_pairs\n";
    for (const auto& f : rows) {
        out << f.metric << '\t' << reportfmt::num(f.group_std) << '\t'
            << reportfmt::num(f.eps.epsilon) << '\t' << (f.eps.fair ? "yes" : "no") << '\t'
            << reportfmt::num(f.eps.max_gap) << '\t' << f.eps.violations.size() << '\n';
    }
    return out.str();
}

inline std::string render_epsilon_violations(const std::vector<FairnessSummary>& rows) {
    std::ostringstream out;
    out << "metric\tgroup_a\tgroup_b\tgap\n";
    for (const auto& f : rows)
        for (const auto& v : f.eps.violations)
            out << f.metric << '\t' << v.group_a << '\t' << v.group_b << '\t'
                << reportfmt::num(v.gap) << '\n';
    return out.str();
}

inline std::string render_mitigation_table(const std::vector<MetricComparison>& rows) {
    std::ostringstream out;
    out << "metric\tdirection\tbefore\tafter\tchange_pct\timproved\n";
    for (const auto& r : rows) {
        out << r.metric << '\t'
            << (r.direction == Direction::LowerBetter ? "lower_better" : "higher_better") << '\t'
            << reportfmt::num(r.before) << '\t' << reportfmt::num(r.after) << '\t'
            << (r.change.undefined ? "na" : reportfmt::num(r.change.percent, 4)) << '\t'
            << (r.change.improved ? "yes" : "no") << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Whole-report assembly.
// ---------------------------------------------------------------------------

namespace detail {

inline void append_run_report(Report& rep, const RunData& run, const ReportOptions& opt,
                              std::ostringstream& summary) {
    const RunAggregates agg = aggregate_records(run.records);
    const DimensionMeans means = dimension_means(agg);
    const std::string prefix = run.manifest.run_id + "/";

    rep.files.push_back({prefix + "dimension_metrics.tsv", render_dimension_metrics(agg)});
    rep.files.push_back({prefix + "radar_std.tsv", render_radar_std(agg)});
    rep.files.push_back({prefix + "target_distributions.tsv", render_target_distributions(agg)});

    const auto fair = fairness_summaries(means, opt.epsilon);
    rep.files.push_back({prefix + "fairness.tsv", render_fairness(fair)});
    rep.files.push_back({prefix + "epsilon_violations.tsv", render_epsilon_violations(fair)});

    std::vector<std::vector<double>> tau_groups, sigma_groups, nu_groups;
    for (const auto& d : means.dims) {
        const auto& v = agg.by_dimension.at(d);
        tau_groups.push_back(v.tau);
        sigma_groups.push_back(v.sigma);
        nu_groups.push_back(v.nu);
    }
    const auto sig_tau = pairwise_mann_whitney(means.dims, tau_groups, opt.mw);
    const auto sig_sigma = pairwise_mann_whitney(means.dims, sigma_groups, opt.mw);
    const auto sig_nu = pairwise_mann_whitney(means.dims, nu_groups, opt.mw);
    rep.files.push_back({prefix + "significance_toxicity.tsv", render_significance_matrix(sig_tau)});
    rep.files.push_back(
        {prefix + "significance_sentiment.tsv", render_significance_matrix(sig_sigma)});
    rep.files.push_back({prefix + "significance_vigilance.tsv", render_significance_matrix(sig_nu)});

    summary << "run " << run.manifest.run_id << "\n";
    summary << "  model: " << run.manifest.model.provider << "/" << run.manifest.model.model
            << "  task: " << to_string(run.manifest.task) << "\n";
    summary << "  records: " << agg.total << " total, " << agg.usable << " usable, " << agg.flagged
            << " flagged, " << agg.failed_calls << " failed calls\n";
    if (agg.usable == 0) summary << "  WARNING: 0 usable records; metric tables are empty\n";
    if (!agg.nu_all.empty())
        summary << "  declination rate: " << reportfmt::num(declination_rate(agg.nu_all), 4)
                << "\n";
    for (const auto& f : fair) {
        summary << "  " << f.metric << ": group_std=" << reportfmt::num(f.group_std, 6)
                << " epsilon_fair=" << (f.eps.fair ? "yes" : "no")
                << " violations=" << f.eps.violations.size() << "\n";
    }
    summary << "  significant pairs (alpha=" << reportfmt::num(opt.alpha, 2)
            << "): toxicity=" << sig_tau.significant_pairs(opt.alpha)
            << " sentiment=" << sig_sigma.significant_pairs(opt.alpha)
            << " vigilance=" << sig_nu.significant_pairs(opt.alpha) << "\n";
    if (!agg.flag_histogram.empty()) {
        summary << "  flags:";
        for (const auto& [flag, count] : agg.flag_histogram)
            summary << " " << flag << "=" << count;
        summary << "\n";
    }
}

/// Scalars feeding the before/after table: unweighted means across dimensions,
/// sentiment mapped to its 0..1 index.
struct ComparisonScalars {
    double tau = 0.0, nu = 0.0, sentiment = 0.0;
    bool ok = false;
};

inline ComparisonScalars comparison_scalars(const std::vector<EvaluationRecord>& records) {
    ComparisonScalars s;
    const RunAggregates agg = aggregate_records(records);
    const DimensionMeans m = dimension_means(agg);
    if (m.dims.empty()) return s;
    s.tau = kahan_mean(m.tau);
    s.nu = kahan_mean(m.nu);
    s.sentiment = sentiment_index(kahan_mean(m.sigma));
    s.ok = true;
    return s;
}

}  // namespace detail

/// Builds every report file from run manifests and their records. Refuses to
/// mix runs produced against different catalogs. When the run set contains a
/// mitigation run together with its baseline, a before/after table is added.
inline Report build_report(const std::vector<RunData>& runs, const ReportOptions& opt) {
    if (runs.empty()) throw ConfigError("report needs at least one run");
    for (const auto& r : runs) {
        if (r.manifest.catalog_digest != runs.front().manifest.catalog_digest)
            throw ConfigError("runs were produced against different catalogs: " +
                              runs.front().manifest.run_id + " vs " + r.manifest.run_id);
    }

    Report rep;
    std::ostringstream summary;
    for (const auto& run : runs) detail::append_run_report(rep, run, opt, summary);

    // Pair a mitigation run with its baseline when both are present.
    const RunData* mitigated = nullptr;
    const RunData* baseline = nullptr;
    for (const auto& r : runs) {
        if (r.manifest.baseline_run.empty()) continue;
        for (const auto& b : runs) {
            if (b.manifest.run_id == r.manifest.baseline_run) {
                mitigated = &r;
                baseline = &b;
                break;
            }
        }
        if (mitigated) break;
    }
    if (mitigated && baseline) {
        const auto before = detail::comparison_scalars(baseline->records);
        const auto after = detail::comparison_scalars(mitigated->records);
        if (before.ok && after.ok) {
            const auto rows = compare_metrics(before.tau, after.tau, before.nu, after.nu,
                                              before.sentiment, after.sentiment);
            rep.files.push_back({"mitigation.tsv", render_mitigation_table(rows)});
            summary << "mitigation " << baseline->manifest.run_id << " -> "
                    << mitigated->manifest.run_id << "\n";
            for (const auto& row : rows) {
                summary << "  " << row.metric << ": " << reportfmt::num(row.before, 4) << " -> "
                        << reportfmt::num(row.after, 4) << " ("
                        << (row.change.undefined ? std::string("na")
                                                 : reportfmt::num(row.change.percent, 4) + "%")
                        << ")\n";
            }
        }
    }

    rep.files.push_back({"summary.txt", summary.str()});

    nlohmann::ordered_json manifest;
    manifest["epsilon"] = opt.epsilon;
    manifest["alpha"] = opt.alpha;
    manifest["runs"] = nlohmann::ordered_json::array();
    for (const auto& r : runs) {
        nlohmann::ordered_json jr;
        jr["run_id"] = r.manifest.run_id;
        jr["config_digest"] = r.manifest.config_digest;
        jr["catalog_digest"] = r.manifest.catalog_digest;
        jr["task"] = to_string(r.manifest.task);
        jr["records"] = r.records.size();
        manifest["runs"].push_back(jr);
    }
    nlohmann::ordered_json file_list = nlohmann::ordered_json::array();
    for (const auto& f : rep.files) file_list.push_back(f.name);
    file_list.push_back("report_manifest.json");
    manifest["files"] = file_list;
    rep.files.push_back({"report_manifest.json", manifest.dump(2) + "\n"});
    return rep;
}

}  // namespace gfaudit
