#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gfaudit/stats.hpp"
#include "oracles.hpp"

using namespace gfaudit;

TEST_CASE("group means agree with a straight-loop oracle") {
    oracle::Lcg rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v;
        const int n = rng.range(1, 40);
        for (int i = 0; i < n; ++i) v.push_back(rng.uniform() * 2.0 - 1.0);
        CHECK(std::fabs(kahan_mean(v) - oracle::mean_plain(v)) < 1e-12);
    }
    CHECK_THROWS_AS(kahan_mean({}), StatsError);
}

TEST_CASE("published per-dimension toxicity row averages to its printed mean") {
    // Ten per-dimension means for one audited model, as printed, and the AVG
    // column computed from them.
    const std::vector<double> row = {0.33, 0.23, 0.39, 0.43, 0.41,
                                     0.32, 0.53, 0.58, 0.44, 0.34};
    const double avg = kahan_mean(row);
    CHECK(std::fabs(avg - 0.40) < 1e-12);
}

TEST_CASE("fairness spread matches a two-pass oracle") {
    oracle::Lcg rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> means;
        const int n = rng.range(2, 30);
        for (int i = 0; i < n; ++i) means.push_back(rng.uniform());
        CHECK(std::fabs(fairness_std(means) - oracle::population_std_two_pass(means)) < 1e-12);
    }
    CHECK(fairness_std({0.4, 0.4, 0.4, 0.4}) == 0.0);
    CHECK(std::fabs(fairness_std({0.0, 1.0}) - 0.5) < 1e-15);
    CHECK_THROWS_AS(fairness_std({0.4}), StatsError);
}

TEST_CASE("declination rate is exactly k over N") {
    CHECK(declination_rate({1, 0, 1, 1}) == 0.75);
    CHECK(declination_rate({0, 0, 0}) == 0.0);
    std::vector<int> scale(100, 0);
    for (int i = 0; i < 77; ++i) scale[i] = 1;  // 77 declinations out of 100
    CHECK(declination_rate(scale) == 0.77);
    CHECK_THROWS_AS(declination_rate({}), StatsError);
}

TEST_CASE("epsilon fairness enumerates exactly the violating pairs") {
    const std::vector<std::string> ids = {"A", "B", "C"};
    const std::vector<double> means = {0.10, 0.12, 0.30};

    const auto tight = epsilon_fairness(ids, means, 0.05);
    CHECK_FALSE(tight.fair);
    REQUIRE(tight.violations.size() == 2);
    CHECK(tight.violations[0].group_a == "A");
    CHECK(tight.violations[0].group_b == "C");
    CHECK(std::fabs(tight.violations[0].gap - 0.20) < 1e-12);
    CHECK(tight.violations[1].group_a == "B");
    CHECK(tight.violations[1].group_b == "C");
    CHECK(std::fabs(tight.violations[1].gap - 0.18) < 1e-12);
    CHECK(std::fabs(tight.max_gap - 0.20) < 1e-12);

    const auto loose = epsilon_fairness(ids, means, 0.25);
    CHECK(loose.fair);
    CHECK(loose.violations.empty());

    CHECK_THROWS_AS(epsilon_fairness(ids, {0.1, 0.2}, 0.05), StatsError);
    CHECK_THROWS_AS(epsilon_fairness(ids, means, -0.1), StatsError);
}

TEST_CASE("epsilon fairness is monotone in epsilon") {
    oracle::Lcg rng(5);
    std::vector<std::string> ids;
    std::vector<double> means;
    for (int i = 0; i < 8; ++i) {
        ids.push_back("G" + std::to_string(i));
        means.push_back(rng.uniform());
    }
    size_t prev = SIZE_MAX;
    for (double eps : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.0}) {
        const auto rep = epsilon_fairness(ids, means, eps);
        CHECK(rep.violations.size() <= prev);
        prev = rep.violations.size();
        if (rep.fair) CHECK(rep.max_gap <= eps);
    }
    CHECK(epsilon_fairness(ids, means, 1.0).fair);  // all means lie in [0,1]
}

TEST_CASE("exact Mann-Whitney matches subset enumeration, ties included") {
    oracle::Lcg rng(31337);
    for (int trial = 0; trial < 60; ++trial) {
        const int n1 = rng.range(2, 7), n2 = rng.range(2, 7);
        std::vector<double> a, b;
        // small integer pool so ties are frequent
        for (int i = 0; i < n1; ++i) a.push_back(rng.range(0, 4));
        for (int i = 0; i < n2; ++i) b.push_back(rng.range(0, 4));

        const MwResult r = mann_whitney(a, b);
        INFO("trial " << trial << " n1=" << n1 << " n2=" << n2);
        CHECK(r.method == MwMethod::Exact);
        CHECK(std::fabs(r.u1 - oracle::mw_u_pairs(a, b)) < 1e-9);
        CHECK(std::fabs(r.u1 + r.u2 - double(n1) * n2) < 1e-9);
        CHECK(std::fabs(r.p - oracle::mw_exact_p_enum(a, b)) < 1e-9);
        CHECK(r.p >= 0.0);
        CHECK(r.p <= 1.0);
    }
}

TEST_CASE("identical samples are maximally insignificant") {
    const std::vector<double> s = {1.0, 2.0, 3.0};
    const MwResult r = mann_whitney(s, s);
    CHECK(r.p == 1.0);
    CHECK(r.ties);
}

TEST_CASE("fully separated six-versus-six samples are significant") {
    const std::vector<double> lo = {1, 2, 3, 4, 5, 6};
    const std::vector<double> hi = {7, 8, 9, 10, 11, 12};
    const MwResult r = mann_whitney(lo, hi);
    CHECK(r.method == MwMethod::Exact);
    // only the two one-sided extremes reach this deviation: 2 / C(12,6)
    CHECK(std::fabs(r.p - 2.0 / 924.0) < 1e-12);
    CHECK(r.p < 0.05);
}

TEST_CASE("asymptotic path stays close to the exact tabulation") {
    oracle::Lcg rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> a, b;
        for (int i = 0; i < 25; ++i) a.push_back(rng.range(0, 9));
        for (int i = 0; i < 25; ++i) b.push_back(rng.range(0, 9) + (trial % 3));

        MwPolicy force_exact;
        force_exact.exact_if_either_leq = 100;
        const MwResult exact = mann_whitney(a, b, force_exact);
        const MwResult asym = mann_whitney(a, b);  // both sides > 20
        REQUIRE(exact.method == MwMethod::Exact);
        REQUIRE(asym.method == MwMethod::Asymptotic);
        INFO("trial " << trial << " exact=" << exact.p << " asym=" << asym.p);
        CHECK(std::fabs(exact.p - asym.p) < 0.02);
    }
}

TEST_CASE("degenerate pools fall back sanely") {
    // all pooled values identical: zero variance, nothing to test
    const std::vector<double> same(25, 3.0);
    const MwResult r = mann_whitney(same, same);
    CHECK(r.p == 1.0);

    // a small side against a huge one exceeds the tabulation budget
    std::vector<double> small = {1.0, 2.0};
    std::vector<double> big;
    for (int i = 0; i < 3000; ++i) big.push_back(i);
    const MwResult fallback = mann_whitney(small, big);
    CHECK(fallback.method == MwMethod::Asymptotic);
    CHECK(fallback.p >= 0.0);
    CHECK(fallback.p <= 1.0);

    CHECK_THROWS_AS(mann_whitney({}, {1.0}), StatsError);
}

TEST_CASE("pairwise significance matrix is symmetric with unit diagonal") {
    const std::vector<std::string> ids = {"A", "B", "C", "D"};
    const std::vector<std::vector<double>> groups = {
        {1, 2, 3, 4, 5, 6}, {7, 8, 9, 10, 11, 12}, {1, 2, 3, 4, 5, 7}, {5.0}};
    const auto sig = pairwise_mann_whitney(ids, groups);

    for (size_t i = 0; i < 4; ++i) CHECK(sig.p[i][i] == 1.0);
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = 0; j < 4; ++j)
            if (sig.testable[i][j]) CHECK(sig.p[i][j] == sig.p[j][i]);

    // group D has a single observation: untestable, flagged, NaN
    CHECK_FALSE(sig.testable[0][3]);
    CHECK(std::isnan(sig.p[0][3]));
    CHECK(sig.testable[0][1]);

    // A vs B is the separated pair from above; A vs C is nearly identical
    CHECK(sig.p[0][1] < 0.05);
    CHECK(sig.p[0][2] > 0.5);
    CHECK(sig.significant_pairs(0.05) >= 1);
}

TEST_CASE("improvement percentages follow the fixed baseline-relative formula") {
    SECTION("published before/after averages") {
        const auto tox = improvement(0.26, 0.02, Direction::LowerBetter);
        CHECK(tox.improved);
        CHECK(std::fabs(tox.percent - oracle::improvement_pct(0.26, 0.02, true)) < 1e-12);
        CHECK_THAT(tox.percent, Catch::Matchers::WithinAbs(92.3077, 0.0001));

        const auto sen = improvement(0.35, 0.79, Direction::HigherBetter);
        CHECK(sen.improved);
        CHECK_THAT(sen.percent, Catch::Matchers::WithinAbs(125.7143, 0.0001));

        // Figures of roughly 93.3% and 124.8% circulate for these same pairs;
        // they come from a different normalization. This formula is fixed to
        // |before - after| / before and deliberately does not reproduce them.
        CHECK(std::fabs(tox.percent - 93.30) > 0.5);
        CHECK(std::fabs(sen.percent - 124.80) > 0.5);

        const auto vig = improvement(0.20, 0.02, Direction::LowerBetter);
        CHECK_THAT(vig.percent, Catch::Matchers::WithinAbs(90.0, 1e-9));
    }
    SECTION("signs, zeros and undefined baselines") {
        const auto worse = improvement(0.10, 0.20, Direction::LowerBetter);
        CHECK_FALSE(worse.improved);
        CHECK_THAT(worse.percent, Catch::Matchers::WithinAbs(-100.0, 1e-9));

        const auto flat = improvement(0.4, 0.4, Direction::HigherBetter);
        CHECK(flat.percent == 0.0);
        CHECK_FALSE(flat.improved);

        const auto undef = improvement(0.0, 0.3, Direction::LowerBetter);
        CHECK(undef.undefined);
        CHECK(std::isnan(undef.percent));

        const auto zero_zero = improvement(0.0, 0.0, Direction::LowerBetter);
        CHECK_FALSE(zero_zero.undefined);
        CHECK(zero_zero.percent == 0.0);
    }
    SECTION("random agreement with the oracle") {
        oracle::Lcg rng(8);
        for (int i = 0; i < 100; ++i) {
            const double before = rng.uniform() + 0.01;
            const double after = rng.uniform();
            const bool lower = (i % 2) == 0;
            const auto imp =
                improvement(before, after, lower ? Direction::LowerBetter : Direction::HigherBetter);
            CHECK(std::fabs(imp.percent - oracle::improvement_pct(before, after, lower)) < 1e-9);
        }
    }
}

TEST_CASE("five-number summaries match hand-computed quartiles") {
    const auto d = describe({1.0, 2.0, 3.0, 4.0});
    CHECK(d.min == 1.0);
    CHECK(d.max == 4.0);
    CHECK_THAT(d.q1, Catch::Matchers::WithinAbs(1.75, 1e-12));   // linear interpolation
    CHECK_THAT(d.median, Catch::Matchers::WithinAbs(2.5, 1e-12));
    CHECK_THAT(d.q3, Catch::Matchers::WithinAbs(3.25, 1e-12));
    CHECK_THAT(d.mean, Catch::Matchers::WithinAbs(2.5, 1e-12));
    CHECK_THAT(d.stddev,
               Catch::Matchers::WithinAbs(oracle::population_std_two_pass({1, 2, 3, 4}), 1e-12));

    const auto single = describe({0.7});
    CHECK(single.q1 == 0.7);
    CHECK(single.median == 0.7);
    CHECK(single.q3 == 0.7);
    CHECK_THROWS_AS(describe({}), StatsError);
}
