#pragma once

// Reference implementations the tests check the library against. Each one is
// written the obvious way and shares no code path with the implementation it
// verifies: means by a plain loop instead of compensated summation, variance
// in two passes instead of Welford, Mann-Whitney by enumerating subsets
// instead of tabulating midrank sums.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace oracle {

inline double mean_plain(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double population_std_two_pass(const std::vector<double>& v) {
    const double m = mean_plain(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

/// U for the first sample by direct pair counting: each (x, y) with x from a,
/// y from b contributes 1 if x > y and 0.5 if x == y.
inline double mw_u_pairs(const std::vector<double>& a, const std::vector<double>& b) {
    double u = 0.0;
    for (double x : a)
        for (double y : b) {
            if (x > y) u += 1.0;
            else if (x == y) u += 0.5;
        }
    return u;
}

/// Two-sided exact p: enumerate every way to pick |a| of the pooled values as
/// "sample one" and count arrangements at least as far from the null center
/// as the observed split. Feasible for small pools only.
inline double mw_exact_p_enum(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pool(a);
    pool.insert(pool.end(), b.begin(), b.end());
    const size_t n = pool.size(), n1 = a.size();
    const double center = static_cast<double>(n1) * static_cast<double>(pool.size() - n1) / 2.0;
    const double obs_dev = std::fabs(mw_u_pairs(a, b) - center);

    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + static_cast<long>(n1), true);
    std::sort(pick.begin(), pick.end());  // canonical start for next_permutation
    uint64_t total = 0, extreme = 0;
    do {
        std::vector<double> s1, s2;
        for (size_t i = 0; i < n; ++i) (pick[i] ? s1 : s2).push_back(pool[i]);
        ++total;
        if (std::fabs(mw_u_pairs(s1, s2) - center) >= obs_dev - 1e-12) ++extreme;
    } while (std::next_permutation(pick.begin(), pick.end()));
    return static_cast<double>(extreme) / static_cast<double>(total);
}

/// Signed percent change against a baseline, the long way.
inline double improvement_pct(double before, double after, bool lower_is_better) {
    const double magnitude = std::fabs(before - after) / std::fabs(before) * 100.0;
    const bool got_better = lower_is_better ? after < before : after > before;
    if (before == after) return 0.0;
    return got_better ? magnitude : -magnitude;
}

/// Tiny deterministic generator for fixture data; unrelated to the library's
/// sampling generator on purpose (linear congruential, Numerical Recipes).
class Lcg {
public:
    explicit Lcg(uint64_t seed) : state_(seed) {}
    uint64_t next() {
        state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
        return state_ >> 16;
    }
    double uniform() { return static_cast<double>(next() % 1000000) / 1000000.0; }
    int range(int lo, int hi) { return lo + static_cast<int>(next() % (hi - lo + 1)); }

private:
    uint64_t state_;
};

}  // namespace oracle
