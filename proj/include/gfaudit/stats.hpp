#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "gfaudit/error.hpp"

namespace gfaudit {

/// Compensated summation; keeps group means stable regardless of record count.
inline double kahan_mean(const std::vector<double>& values) {
    if (values.empty()) throw StatsError("mean of empty sample");
    double sum = 0.0, comp = 0.0;
    for (double v : values) {
        const double y = v - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum / static_cast<double>(values.size());
}

/// Population standard deviation over per-group means, via Welford's recurrence.
/// This is the headline fairness score: 0 means all groups are treated alike.
inline double fairness_std(const std::vector<double>& group_means) {
    if (group_means.size() < 2)
        throw StatsError("fairness spread needs at least 2 groups, got " +
                         std::to_string(group_means.size()));
    double mean = 0.0, m2 = 0.0;
    size_t n = 0;
    for (double v : group_means) {
        ++n;
        const double delta = v - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (v - mean);
    }
    return std::sqrt(m2 / static_cast<double>(n));
}

/// Share of responses that declined: D = (1/N) * sum(nu).
inline double declination_rate(const std::vector<int>& nu) {
    if (nu.empty()) throw StatsError("declination rate over zero records");
    int64_t sum = 0;
    for (int v : nu) sum += v;
    return static_cast<double>(sum) / static_cast<double>(nu.size());
}

// ---------------------------------------------------------------------------
// Epsilon fairness: every pair of group means must sit within epsilon.
// ---------------------------------------------------------------------------

struct EpsilonViolation {
    std::string group_a;
    std::string group_b;
    double gap = 0.0;
};

struct EpsilonReport {
    double epsilon = 0.0;
    bool fair = true;
    double max_gap = 0.0;
    std::vector<EpsilonViolation> violations;
};

inline EpsilonReport epsilon_fairness(const std::vector<std::string>& ids,
                                      const std::vector<double>& means, double epsilon) {
    if (ids.size() != means.size()) throw StatsError("ids/means size mismatch");
    if (epsilon < 0.0) throw StatsError("epsilon must be non-negative");
    EpsilonReport rep;
    rep.epsilon = epsilon;
    for (size_t i = 0; i < means.size(); ++i) {
        for (size_t j = i + 1; j < means.size(); ++j) {
            const double gap = std::fabs(means[i] - means[j]);
            rep.max_gap = std::max(rep.max_gap, gap);
            if (gap > epsilon) rep.violations.push_back({ids[i], ids[j], gap});
        }
    }
    rep.fair = rep.violations.empty();
    return rep;
}

// ---------------------------------------------------------------------------
// Mann-Whitney U, two-sided, midranks for ties. Exact null distribution when a
// side is small enough; tie-corrected normal approximation otherwise.
// ---------------------------------------------------------------------------

enum class MwMethod { Exact, Asymptotic };

struct MwResult {
    double u1 = 0.0;  // U for the first sample
    double u2 = 0.0;
    double p = 1.0;   // two-sided
    MwMethod method = MwMethod::Asymptotic;
    bool ties = false;
};

struct MwPolicy {
    // Exact when either side has at most this many observations...
    size_t exact_if_either_leq = 20;
    // ...unless the tabulation would exceed this many DP cells.
    uint64_t exact_max_cells = 8'000'000;
};

namespace detail {

struct RankedPool {
    std::vector<int64_t> doubled;  // 2 * midrank for every pooled value, integral by construction
    int64_t w1_doubled = 0;        // 2 * rank sum of sample 1
    bool ties = false;
    std::vector<size_t> tie_sizes;
};

inline RankedPool midrank(const std::vector<double>& a, const std::vector<double>& b) {
    struct Tagged {
        double v;
        bool first;
    };
    std::vector<Tagged> pool;
    pool.reserve(a.size() + b.size());
    for (double v : a) pool.push_back({v, true});
    for (double v : b) pool.push_back({v, false});
    std::sort(pool.begin(), pool.end(), [](const Tagged& x, const Tagged& y) { return x.v < y.v; });

    RankedPool out;
    out.doubled.resize(pool.size());
    size_t i = 0;
    while (i < pool.size()) {
        size_t j = i;
        while (j + 1 < pool.size() && pool[j + 1].v == pool[i].v) ++j;
        // doubled midrank of a tie run spanning 1-based ranks [i+1, j+1]
        const int64_t d = static_cast<int64_t>(i + 1) + static_cast<int64_t>(j + 1);
        for (size_t k = i; k <= j; ++k) {
            out.doubled[k] = d;
            if (pool[k].first) out.w1_doubled += d;
        }
        if (j > i) {
            out.ties = true;
            out.tie_sizes.push_back(j - i + 1);
        }
        i = j + 1;
    }
    return out;
}

/// Exact two-sided p by tabulating rank-sum counts for every k-subset of the
/// pooled (doubled) midranks. Counts are doubles; they can exceed 2^53 for big
/// pools, which costs a few ulps of p, not correctness of the tabulation.
inline bool exact_mw_p(const RankedPool& pool, size_t n1, size_t n2, const MwPolicy& policy,
                       double& p_out) {
    const size_t k = std::min(n1, n2);
    const size_t n_other = std::max(n1, n2);
    int64_t sum_all = 0;
    for (int64_t d : pool.doubled) sum_all += d;
    const uint64_t cells = static_cast<uint64_t>(k + 1) * static_cast<uint64_t>(sum_all + 1);
    if (cells > policy.exact_max_cells) return false;

    // dp[c][s] = number of c-subsets of the doubled ranks with sum s
    std::vector<std::vector<double>> dp(k + 1, std::vector<double>(sum_all + 1, 0.0));
    dp[0][0] = 1.0;
    for (int64_t d : pool.doubled) {
        for (size_t c = k; c >= 1; --c) {
            for (int64_t s = sum_all; s >= d; --s) {
                if (dp[c - 1][s - d] != 0.0) dp[c][s] += dp[c - 1][s - d];
            }
        }
    }

    // Observed statistic for the smaller side, in doubled units.
    int64_t w_small_doubled;
    if (n1 <= n2) {
        w_small_doubled = pool.w1_doubled;
    } else {
        w_small_doubled = sum_all - pool.w1_doubled;
    }
    const int64_t u_small_doubled =
        w_small_doubled - static_cast<int64_t>(k) * static_cast<int64_t>(k + 1);
    const int64_t center_doubled = static_cast<int64_t>(k) * static_cast<int64_t>(n_other);
    const int64_t obs_dev = std::llabs(u_small_doubled - center_doubled);

    double extreme = 0.0, total = 0.0;
    for (int64_t s = 0; s <= sum_all; ++s) {
        const double count = dp[k][s];
        if (count == 0.0) continue;
        total += count;
        const int64_t u_d = s - static_cast<int64_t>(k) * static_cast<int64_t>(k + 1);
        if (std::llabs(u_d - center_doubled) >= obs_dev) extreme += count;
    }
    p_out = std::min(1.0, extreme / total);
    return true;
}

}  // namespace detail

inline MwResult mann_whitney(const std::vector<double>& a, const std::vector<double>& b,
                             const MwPolicy& policy = {}) {
    const size_t n1 = a.size(), n2 = b.size();
    if (n1 == 0 || n2 == 0) throw StatsError("Mann-Whitney needs non-empty samples");
    const size_t n = n1 + n2;

    const auto pool = detail::midrank(a, b);
    MwResult res;
    res.ties = pool.ties;
    const double w1 = static_cast<double>(pool.w1_doubled) / 2.0;
    res.u1 = w1 - static_cast<double>(n1) * static_cast<double>(n1 + 1) / 2.0;
    res.u2 = static_cast<double>(n1) * static_cast<double>(n2) - res.u1;

    if ((n1 <= policy.exact_if_either_leq || n2 <= policy.exact_if_either_leq)) {
        double p = 1.0;
        if (detail::exact_mw_p(pool, n1, n2, policy, p)) {
            res.p = p;
            res.method = MwMethod::Exact;
            return res;
        }
        // Tabulation too large; fall through to the normal approximation.
    }

    const double nn = static_cast<double>(n);
    double tie_term = 0.0;
    for (size_t t : pool.tie_sizes) {
        const double td = static_cast<double>(t);
        tie_term += td * td * td - td;
    }
    const double var = (static_cast<double>(n1) * static_cast<double>(n2) / 12.0) *
                       ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    res.method = MwMethod::Asymptotic;
    if (var <= 0.0) {
        res.p = 1.0;  // all pooled values identical
        return res;
    }
    const double mean_u = static_cast<double>(n1) * static_cast<double>(n2) / 2.0;
    const double dev = std::max(0.0, std::fabs(res.u1 - mean_u) - 0.5);  // continuity correction
    const double z = dev / std::sqrt(var);
    res.p = std::erfc(z / std::sqrt(2.0));
    if (res.p > 1.0) res.p = 1.0;
    return res;
}

/// All-pairs significance over labelled groups. Diagonal is 1; a pair with a
/// side of fewer than 2 observations is marked untestable (p = NaN).
struct PairwiseSignificance {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> p;
    std::vector<std::vector<MwMethod>> method;
    std::vector<std::vector<bool>> testable;

    size_t significant_pairs(double alpha) const {
        size_t count = 0;
        for (size_t i = 0; i < ids.size(); ++i)
            for (size_t j = i + 1; j < ids.size(); ++j)
                if (testable[i][j] && p[i][j] < alpha) ++count;
        return count;
    }
};

inline PairwiseSignificance pairwise_mann_whitney(const std::vector<std::string>& ids,
                                                  const std::vector<std::vector<double>>& values,
                                                  const MwPolicy& policy = {}) {
    if (ids.size() != values.size()) throw StatsError("ids/values size mismatch");
    const size_t g = ids.size();
    PairwiseSignificance out;
    out.ids = ids;
    out.p.assign(g, std::vector<double>(g, 1.0));
    out.method.assign(g, std::vector<MwMethod>(g, MwMethod::Asymptotic));
    out.testable.assign(g, std::vector<bool>(g, true));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (size_t i = 0; i < g; ++i) {
        for (size_t j = i + 1; j < g; ++j) {
            if (values[i].size() < 2 || values[j].size() < 2) {
                out.p[i][j] = out.p[j][i] = nan;
                out.testable[i][j] = out.testable[j][i] = false;
                continue;
            }
            const MwResult r = mann_whitney(values[i], values[j], policy);
            out.p[i][j] = out.p[j][i] = r.p;
            out.method[i][j] = out.method[j][i] = r.method;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Before/after improvement, as a signed percentage of the baseline.
// ---------------------------------------------------------------------------

enum class Direction { LowerBetter, HigherBetter };

struct Improvement {
    double before = 0.0;
    double after = 0.0;
    Direction direction = Direction::LowerBetter;
    double percent = 0.0;  // positive = moved the right way
    bool improved = false;
    bool undefined = false;  // baseline was 0 and the value moved
};

inline Improvement improvement(double before, double after, Direction direction) {
    Improvement imp;
    imp.before = before;
    imp.after = after;
    imp.direction = direction;
    if (before == after) return imp;  // 0%, unchanged
    if (before == 0.0) {
        imp.undefined = true;
        imp.percent = std::numeric_limits<double>::quiet_NaN();
        imp.improved = (direction == Direction::HigherBetter) ? (after > 0.0) : false;
        return imp;
    }
    const double magnitude = std::fabs(before - after) / std::fabs(before) * 100.0;
    const bool better = (direction == Direction::LowerBetter) ? (after < before) : (after > before);
    imp.percent = better ? magnitude : -magnitude;
    imp.improved = better;
    return imp;
}

// ---------------------------------------------------------------------------
// Five-number summary for distribution tables.
// ---------------------------------------------------------------------------

struct Distribution {
    size_t n = 0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    double mean = 0.0;
    double stddev = 0.0;  // population
};

inline Distribution describe(std::vector<double> values) {
    if (values.empty()) throw StatsError("describe over zero values");
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double h = q * static_cast<double>(values.size() - 1);
        const size_t lo = static_cast<size_t>(h);
        if (lo + 1 >= values.size()) return values.back();
        const double frac = h - static_cast<double>(lo);
        return values[lo] + frac * (values[lo + 1] - values[lo]);
    };
    Distribution d;
    d.n = values.size();
    d.min = values.front();
    d.max = values.back();
    d.q1 = quantile(0.25);
    d.median = quantile(0.5);
    d.q3 = quantile(0.75);
    d.mean = kahan_mean(values);
    double m2 = 0.0;
    for (double v : values) m2 += (v - d.mean) * (v - d.mean);
    d.stddev = std::sqrt(m2 / static_cast<double>(values.size()));
    return d;
}

}  // namespace gfaudit
