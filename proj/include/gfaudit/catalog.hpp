#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gfaudit/error.hpp"
#include "gfaudit/rng.hpp"
#include "gfaudit/util.hpp"

namespace gfaudit {

struct Dimension {
    std::string code;  // short identifier, e.g. "AB"
    std::string name;  // human-readable label, e.g. "Ability"
};

/// The ten standard dimension codes plus user-registered extensions.
class DimensionRegistry {
public:
    static DimensionRegistry builtin() {
        DimensionRegistry r;
        r.dims_ = {
            {"AB", "Ability"},
            {"AG", "Age"},
            {"BT", "Body Type"},
            {"GS", "Gender and Sex"},
            {"NT", "Nationality"},
            {"PI", "Political Ideologies"},
            {"RE", "Race and Ethnicity"},
            {"RG", "Religion"},
            {"SO", "Sexual Orientation"},
            {"SC", "Socioeconomic Class"},
        };
        return r;
    }

    void register_extension(const std::string& code, const std::string& name) {
        if (contains(code)) throw ConfigError("dimension code already registered: " + code);
        dims_.push_back({code, name});
    }

    bool contains(const std::string& code) const {
        return std::any_of(dims_.begin(), dims_.end(),
                           [&](const Dimension& d) { return d.code == code; });
    }

    std::string name_of(const std::string& code) const {
        for (const auto& d : dims_)
            if (d.code == code) return d.name;
        throw CatalogError("unknown dimension code: " + code);
    }

    const std::vector<Dimension>& dimensions() const { return dims_; }

private:
    std::vector<Dimension> dims_;
};

/// One (dimension, target, attribute) triple. The atomic evaluation unit.
struct DataPoint {
    std::string dimension;
    std::string target;
    std::string attribute;

    bool operator==(const DataPoint&) const = default;
    bool operator<(const DataPoint& o) const {
        return std::tie(dimension, target, attribute) < std::tie(o.dimension, o.target, o.attribute);
    }
};

/// Per-dimension target and attribute term lists. Terms are stored sorted, so a
/// catalog is a pure function of its row multiset regardless of file ordering.
class TermCatalog {
public:
    struct Entry {
        std::vector<std::string> targets;
        std::vector<std::string> attributes;
    };

    const std::vector<std::string>& dimension_codes() const { return order_; }

    bool has_dimension(const std::string& code) const { return entries_.count(code) != 0; }

    const Entry& entry(const std::string& code) const {
        auto it = entries_.find(code);
        if (it == entries_.end()) throw CatalogError("unknown dimension code: " + code);
        return it->second;
    }

    const std::vector<std::string>& targets(const std::string& code) const {
        return entry(code).targets;
    }
    const std::vector<std::string>& attributes(const std::string& code) const {
        return entry(code).attributes;
    }

    /// Canonical digest over the full sorted content; identifies the catalog in
    /// run manifests.
    std::string content_key() const {
        std::ostringstream os;
        for (const auto& code : order_) {
            const Entry& e = entries_.at(code);
            os << code << '\x1f';
            for (const auto& t : e.targets) os << 't' << t.size() << ':' << t;
            for (const auto& a : e.attributes) os << 'a' << a.size() << ':' << a;
        }
        return os.str();
    }

    // Used by the loader only.
    void insert(const std::string& code, bool is_target, std::string term, size_t& dup_count) {
        auto [it, fresh] = entries_.try_emplace(code);
        if (fresh) order_.push_back(code);
        auto& slot = is_target ? staged_targets_[code] : staged_attributes_[code];
        if (!slot.insert(std::move(term)).second) ++dup_count;
        (void)it;
    }

    void finalize(const DimensionRegistry& registry) {
        for (const auto& code : order_) {
            Entry& e = entries_[code];
            const auto& ts = staged_targets_[code];
            const auto& as = staged_attributes_[code];
            if (ts.empty() || as.empty())
                throw CatalogError("dimension " + code + " has " + std::to_string(ts.size()) +
                                   " targets and " + std::to_string(as.size()) +
                                   " attributes; both lists must be non-empty");
            e.targets.assign(ts.begin(), ts.end());
            e.attributes.assign(as.begin(), as.end());
        }
        staged_targets_.clear();
        staged_attributes_.clear();
        // Canonical dimension order: registry order first, extensions after.
        std::vector<std::string> canon;
        for (const auto& d : registry.dimensions())
            if (has_dimension(d.code)) canon.push_back(d.code);
        for (const auto& code : order_)
            if (std::find(canon.begin(), canon.end(), code) == canon.end()) canon.push_back(code);
        order_ = std::move(canon);
    }

private:
    std::vector<std::string> order_;
    std::map<std::string, Entry> entries_;
    std::map<std::string, std::set<std::string>> staged_targets_;
    std::map<std::string, std::set<std::string>> staged_attributes_;
};

struct CatalogLoad {
    TermCatalog catalog;
    size_t duplicate_rows = 0;
};

/// Parses a {dimension, kind, term} table. Tab-delimited, '#' comments, header
/// row required. Throws CatalogError listing every rejected row.
inline CatalogLoad load_catalog(std::istream& in,
                                const DimensionRegistry& registry = DimensionRegistry::builtin()) {
    CatalogLoad out;
    std::vector<std::string> rejects;
    auto reject = [&](size_t line, const std::string& why) {
        if (rejects.size() < 20) rejects.push_back("line " + std::to_string(line) + ": " + why);
        else if (rejects.size() == 20) rejects.push_back("...");
    };

    std::string line;
    size_t lineno = 0;
    bool saw_header = false;
    size_t data_rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto fields = split(line, '\t');
        if (!saw_header) {
            if (fields.size() != 3 || trim(fields[0]) != "dimension" || trim(fields[1]) != "kind" ||
                trim(fields[2]) != "term")
                throw CatalogError("line " + std::to_string(lineno) +
                                   ": expected header 'dimension<TAB>kind<TAB>term'");
            saw_header = true;
            continue;
        }
        if (fields.size() != 3) {
            reject(lineno, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
            continue;
        }
        const std::string code = trim(fields[0]);
        const std::string kind = trim(fields[1]);
        const std::string term = trim(fields[2]);
        if (code.empty()) {
            reject(lineno, "empty dimension code");
            continue;
        }
        if (!registry.contains(code)) {
            reject(lineno, "unregistered dimension code '" + code + "'");
            continue;
        }
        if (kind != "target" && kind != "attribute") {
            reject(lineno, "unknown kind '" + kind + "' (expected 'target' or 'attribute')");
            continue;
        }
        if (term.empty()) {
            reject(lineno, "empty term");
            continue;
        }
        ++data_rows;
        out.catalog.insert(code, kind == "target", term, out.duplicate_rows);
    }
    if (!rejects.empty()) {
        std::string msg = "catalog has rejected rows:";
        for (const auto& r : rejects) msg += "\n  " + r;
        throw CatalogError(msg);
    }
    if (data_rows == 0) throw CatalogError("catalog source has no data rows");
    out.catalog.finalize(registry);
    return out;
}

inline CatalogLoad load_catalog_file(const std::string& path,
                                     const DimensionRegistry& registry = DimensionRegistry::builtin()) {
    std::ifstream in(path);
    if (!in) throw CatalogError("cannot open catalog file: " + path);
    return load_catalog(in, registry);
}

/// |T_d| * |A_d|.
inline uint64_t cartesian_count(const TermCatalog& catalog, const std::string& code) {
    const auto& e = catalog.entry(code);
    return static_cast<uint64_t>(e.targets.size()) * static_cast<uint64_t>(e.attributes.size());
}

/// Full product for one dimension, target-major, both factors in catalog order.
/// Empty term lists cannot occur here; load_catalog rejects them.
inline std::vector<DataPoint> enumerate_cartesian(const TermCatalog& catalog,
                                                  const std::string& code) {
    const auto& e = catalog.entry(code);
    std::vector<DataPoint> out;
    out.reserve(e.targets.size() * e.attributes.size());
    for (const auto& t : e.targets)
        for (const auto& a : e.attributes) out.push_back({code, t, a});
    return out;
}

struct SamplePlan {
    size_t targets_per_dimension = 20;
    size_t attributes_per_dimension = 100;
    uint64_t seed = 0;
    std::optional<std::vector<std::string>> dimension_filter;

    void validate() const {
        if (targets_per_dimension < 1 || attributes_per_dimension < 1)
            throw ConfigError("sample plan counts must be >= 1");
    }
};

/// Without-replacement draw of plan.targets x plan.attributes per dimension,
/// streams keyed by (seed, dimension, role), output target-major in draw order.
/// Identical plans give identical output.
inline std::vector<DataPoint> sample(const TermCatalog& catalog, const SamplePlan& plan) {
    plan.validate();
    std::vector<std::string> codes;
    if (plan.dimension_filter) {
        for (const auto& code : *plan.dimension_filter) {
            if (!catalog.has_dimension(code)) throw ConfigError("unknown dimension code: " + code);
            codes.push_back(code);
        }
    } else {
        codes = catalog.dimension_codes();
    }

    std::vector<DataPoint> out;
    out.reserve(codes.size() * plan.targets_per_dimension * plan.attributes_per_dimension);
    for (const auto& code : codes) {
        const auto& e = catalog.entry(code);
        if (e.targets.size() < plan.targets_per_dimension)
            throw ConfigError("dimension " + code + ": plan needs " +
                              std::to_string(plan.targets_per_dimension) + " targets, catalog has " +
                              std::to_string(e.targets.size()) + " (deficit " +
                              std::to_string(plan.targets_per_dimension - e.targets.size()) + ")");
        if (e.attributes.size() < plan.attributes_per_dimension)
            throw ConfigError("dimension " + code + ": plan needs " +
                              std::to_string(plan.attributes_per_dimension) +
                              " attributes, catalog has " + std::to_string(e.attributes.size()) +
                              " (deficit " +
                              std::to_string(plan.attributes_per_dimension - e.attributes.size()) +
                              ")");
        auto trng = keyed_stream(plan.seed, code + "/targets");
        auto arng = keyed_stream(plan.seed, code + "/attributes");
        const auto tidx = sample_indices(trng, e.targets.size(), plan.targets_per_dimension);
        const auto aidx = sample_indices(arng, e.attributes.size(), plan.attributes_per_dimension);
        for (size_t ti : tidx)
            for (size_t ai : aidx) out.push_back({code, e.targets[ti], e.attributes[ai]});
    }
    return out;
}

/// Sample manifest: one tab-separated {dimension, target, attribute} line per
/// point, in sampling order.
inline void write_sample_manifest(const std::vector<DataPoint>& points, std::ostream& os) {
    os << "# dimension\ttarget\tattribute\n";
    for (const auto& p : points) os << p.dimension << '\t' << p.target << '\t' << p.attribute << '\n';
}

inline std::vector<DataPoint> load_sample_manifest(std::istream& in) {
    std::vector<DataPoint> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, '\t');
        if (fields.size() != 3)
            throw CatalogError("manifest line " + std::to_string(lineno) + ": expected 3 fields");
        out.push_back({fields[0], fields[1], fields[2]});
    }
    return out;
}

/// Claimed per-dimension statistics, as published: {targets, attributes,
/// combinations} rows plus an optional SUM row.
struct StatsClaim {
    struct Row {
        uint64_t targets = 0;
        uint64_t attributes = 0;
        uint64_t combinations = 0;
    };
    std::vector<std::pair<std::string, Row>> rows;  // dimension order preserved
    std::optional<Row> sum;
};

inline StatsClaim load_stats_claims(std::istream& in) {
    StatsClaim out;
    std::string line;
    size_t lineno = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto fields = split(line, '\t');
        if (fields.size() != 4)
            throw CatalogError("stats line " + std::to_string(lineno) + ": expected 4 fields");
        if (!saw_header) {
            saw_header = true;  // "dimension  targets  attributes  combinations"
            continue;
        }
        StatsClaim::Row row;
        try {
            row.targets = std::stoull(trim(fields[1]));
            row.attributes = std::stoull(trim(fields[2]));
            row.combinations = std::stoull(trim(fields[3]));
        } catch (const std::exception&) {
            throw CatalogError("stats line " + std::to_string(lineno) + ": non-numeric count");
        }
        const std::string code = trim(fields[0]);
        if (code == "SUM")
            out.sum = row;
        else
            out.rows.emplace_back(code, row);
    }
    return out;
}

inline StatsClaim load_stats_claims_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CatalogError("cannot open stats file: " + path);
    return load_stats_claims(in);
}

/// Cross-checks a catalog against claimed statistics. Returns warnings, never
/// throws on mismatches: discrepancies in published tables are reportable facts,
/// not load failures.
inline std::vector<std::string> validate_against_stats(const TermCatalog& catalog,
                                                       const StatsClaim& claims) {
    std::vector<std::string> warnings;
    uint64_t sum_t = 0, sum_a = 0, sum_c = 0;
    for (const auto& [code, row] : claims.rows) {
        sum_t += row.targets;
        sum_a += row.attributes;
        sum_c += row.combinations;
        const uint64_t product = row.targets * row.attributes;
        if (product != row.combinations)
            warnings.push_back(code + ": claimed combinations " + std::to_string(row.combinations) +
                               " != targets*attributes " + std::to_string(product));
        if (!catalog.has_dimension(code)) {
            warnings.push_back(code + ": claimed but absent from catalog");
            continue;
        }
        const auto& e = catalog.entry(code);
        if (e.targets.size() != row.targets)
            warnings.push_back(code + ": catalog has " + std::to_string(e.targets.size()) +
                               " targets, claim says " + std::to_string(row.targets));
        if (e.attributes.size() != row.attributes)
            warnings.push_back(code + ": catalog has " + std::to_string(e.attributes.size()) +
                               " attributes, claim says " + std::to_string(row.attributes));
    }
    if (claims.sum) {
        if (claims.sum->targets != sum_t)
            warnings.push_back("SUM: claimed targets " + std::to_string(claims.sum->targets) +
                               " != column sum " + std::to_string(sum_t));
        if (claims.sum->attributes != sum_a)
            warnings.push_back("SUM: claimed attributes " + std::to_string(claims.sum->attributes) +
                               " != column sum " + std::to_string(sum_a));
        if (claims.sum->combinations != sum_c)
            warnings.push_back("SUM: claimed combinations " +
                               std::to_string(claims.sum->combinations) + " != column sum " +
                               std::to_string(sum_c));
    }
    return warnings;
}

}  // namespace gfaudit
