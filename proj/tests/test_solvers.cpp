#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sublora/properties.hpp"
#include "sublora/rng.hpp"
#include "sublora/solvers.hpp"

using namespace sublora;

namespace {

QuadObjective toy_projected() {
    Mat q(2, 2);
    q(0, 0) = 2.0;
    q(1, 1) = 2.0;
    return QuadObjective({-0.2, 0.2}, q, {1.0, 2.1});
}

}  // namespace

TEST_CASE("greedy on the toy instance keeps the right entry") {
    const QuadObjective obj = toy_projected();
    const Selection sel = greedy_max(obj, 1);
    CHECK(sel.kept == std::vector<int>{1});
    CHECK(sel.value == doctest::Approx(-1.2).epsilon(1e-12));
    CHECK(sel.gains.size() == 1);
    CHECK(sel.gains[0] == doctest::Approx(3.99).epsilon(1e-12));
}

TEST_CASE("greedy boundary budgets") {
    const QuadObjective obj = toy_projected();
    const Selection none = greedy_max(obj, 0);
    CHECK(none.kept.empty());
    CHECK(none.value == doctest::Approx(evaluate(obj, {})));
    const Selection all = greedy_max(obj, 2);
    CHECK(all.kept.size() == 2);
    CHECK(all.value == 0.0);
    CHECK_THROWS_AS(greedy_max(obj, 3), std::invalid_argument);
}

TEST_CASE("greedy fixed loop vs early stop") {
    // gains from the empty set are (-3.0, -0.21) for the unprojected toy
    Mat q(2, 2);
    q(0, 0) = 2.0;
    q(1, 1) = 2.0;
    q(0, 1) = q(1, 0) = -2.0;
    const QuadObjective obj({-0.2, 0.2}, q, {1.0, 2.1});
    const Selection fixed = greedy_max(obj, 2, false);
    CHECK(fixed.kept.size() == 2);
    CHECK(!fixed.early_stopped);
    const Selection stopped = greedy_max(obj, 2, true);
    CHECK(stopped.kept.empty());
    CHECK(stopped.early_stopped);
}

TEST_CASE("greedy ties break to the lowest index") {
    Mat q(3, 3);
    const QuadObjective obj({-1.0, -1.0, -1.0}, q, {1.0, 1.0, 1.0});
    const Selection sel = greedy_max(obj, 2);
    CHECK(sel.kept == std::vector<int>{0, 1});
}

TEST_CASE("randomized greedy sampling frequency matches the proportional rule") {
    const QuadObjective obj = toy_projected();
    // gains (1.2, 3.99): element 1 expected with probability 3.99/5.19
    const double expected = 3.99 / 5.19;
    int hits = 0;
    const int trials = 10000;
    for (int s = 0; s < trials; ++s) {
        const Selection sel = randomized_greedy_max(obj, 1, static_cast<std::uint64_t>(s));
        REQUIRE(sel.kept.size() == 1);
        if (sel.kept[0] == 1) ++hits;
    }
    const double freq = static_cast<double>(hits) / trials;
    CHECK(std::fabs(freq - expected) < 0.02);
}

TEST_CASE("randomized greedy uniform fallback when all gains vanish") {
    Mat q(4, 4);
    q(0, 0) = q(1, 1) = q(2, 2) = q(3, 3) = 1.0;
    const QuadObjective obj({0.5, -0.5, 1.0, 0.0}, q, {0.0, 0.0, 0.0, 0.0});
    std::vector<int> counts(4, 0);
    const int trials = 8000;
    for (int s = 0; s < trials; ++s) {
        const Selection sel = randomized_greedy_max(obj, 1, static_cast<std::uint64_t>(s));
        REQUIRE(sel.kept.size() == 1);
        counts[static_cast<size_t>(sel.kept[0])] += 1;
    }
    for (int j = 0; j < 4; ++j)
        CHECK(std::fabs(counts[static_cast<size_t>(j)] / double(trials) - 0.25) < 0.03);
}

TEST_CASE("randomized greedy full budget and determinism") {
    const QuadObjective obj = toy_projected();
    const Selection a = randomized_greedy_max(obj, 2, 77);
    CHECK(a.kept.size() == 2);
    const Selection b = randomized_greedy_max(obj, 2, 77);
    CHECK(a.kept == b.kept);
    CHECK(a.value == b.value);
    CHECK(a.seed.has_value());
    CHECK(*a.seed == 77);
}

TEST_CASE("brute force on the toy instance") {
    const QuadObjective obj = toy_projected();
    const Selection sel = brute_force_max(obj, 1);
    CHECK(sel.kept == std::vector<int>{1});
    CHECK(sel.value == doctest::Approx(-1.2).epsilon(1e-12));
    CHECK(brute_force_max(obj, 0).kept.empty());
    Mat big(21, 21);
    CHECK_THROWS_AS(brute_force_max(QuadObjective(Vec(21, 0.0), big, Vec(21, 1.0)), 2),
                    CapacityError);
}

TEST_CASE("brute force dominates greedy") {
    Rng rng(404);
    for (int k = 0; k < 100; ++k) {
        const int n = 3 + rng.uniform_int(8);
        const int b = 1 + rng.uniform_int(n);
        const QuadObjective obj = properties::random_instance(rng, n);
        CHECK(brute_force_max(obj, b).value >= greedy_max(obj, b).value - 1e-12);
    }
}

TEST_CASE("brute force tie-break is the lexicographically smallest set") {
    // all-zero instance: every subset has value 0
    Mat q(3, 3);
    const QuadObjective obj({0.0, 0.0, 0.0}, q, {0.0, 0.0, 0.0});
    const Selection sel = brute_force_max(obj, 2);
    CHECK(sel.kept.empty());  // {} is lexicographically smallest among ties
}

TEST_CASE("top-k selection") {
    CHECK(top_k_select({-0.2, 0.42}, 1) == std::vector<int>{1});
    CHECK(top_k_select({1.2, 3.99}, 1) == std::vector<int>{1});
    CHECK(top_k_select({5.0, 5.0, 5.0}, 2) == std::vector<int>{0, 1});
    CHECK(top_k_select({1.0, 2.0, 3.0}, 0).empty());
    CHECK_THROWS_AS(top_k_select({1.0}, 2), std::invalid_argument);
}

TEST_CASE("greedy ratio on nonnegative monotone submodular instances") {
    Rng rng(1312);
    const double ratio = 1.0 - 1.0 / std::exp(1.0);
    for (int k = 0; k < 100; ++k) {
        const int n = 3 + rng.uniform_int(8);
        const int b = 1 + rng.uniform_int(std::min(n, 6));
        const QuadObjective obj = properties::random_monotone_submodular(rng, n);
        const double shift = -evaluate(obj, {});
        const double greedy = greedy_max(obj, b).value + shift;
        const double opt = brute_force_max(obj, b).value + shift;
        REQUIRE(opt >= -1e-12);
        CHECK(greedy >= ratio * opt - 1e-9);
    }
}

TEST_CASE("randomized greedy expectation on nonnegative submodular instances") {
    Rng rng(55);
    const double inv_e = 1.0 / std::exp(1.0);
    for (int k = 0; k < 5; ++k) {
        const int n = 4 + rng.uniform_int(5);
        const int b = 1 + rng.uniform_int(4);
        const QuadObjective obj = properties::random_submodular(rng, n);
        const double shift = -properties::min_value_exhaustive(obj);
        const double opt = brute_force_max(obj, b).value + shift;
        const int seeds = 500;
        double sum = 0.0, sumsq = 0.0;
        for (int s = 0; s < seeds; ++s) {
            const double v = randomized_greedy_max(obj, b, static_cast<std::uint64_t>(s)).value + shift;
            sum += v;
            sumsq += v * v;
        }
        const double mean = sum / seeds;
        const double se = std::sqrt(std::max(0.0, sumsq / seeds - mean * mean) / seeds);
        CHECK(mean >= inv_e * opt - 3.0 * se - 1e-9);
    }
}

TEST_CASE("greedy selections are nested across budgets") {
    Rng rng(808);
    for (int k = 0; k < 50; ++k) {
        const int n = 4 + rng.uniform_int(7);
        const QuadObjective obj = properties::random_instance(rng, n);
        std::vector<int> prev;
        for (int b = 0; b <= n; ++b) {
            std::vector<int> cur = greedy_max(obj, b).kept;
            std::sort(cur.begin(), cur.end());
            CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
            prev = std::move(cur);
        }
    }
}

TEST_CASE("greedy on separable instances equals top-k of per-element scores") {
    Rng rng(909);
    for (int k = 0; k < 100; ++k) {
        const int n = 3 + rng.uniform_int(8);
        const int b = rng.uniform_int(n + 1);
        const QuadObjective probe = properties::random_instance(rng, n);
        Mat diag(n, n);
        for (int i = 0; i < n; ++i) diag(i, i) = probe.quadratic()(i, i);
        const QuadObjective obj(probe.linear(), diag, probe.values());
        Vec scores(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) {
            const double xj = obj.values()[static_cast<size_t>(j)];
            scores[static_cast<size_t>(j)] =
                -obj.linear()[static_cast<size_t>(j)] * xj + 0.5 * diag(j, j) * xj * xj;
        }
        std::vector<int> kept = greedy_max(obj, b).kept;
        std::sort(kept.begin(), kept.end());
        CHECK(kept == top_k_select(scores, b));
    }
}

TEST_CASE("selection serializes to json") {
    const Selection sel = randomized_greedy_max(toy_projected(), 1, 3);
    const auto j = sel.to_json();
    CHECK(j.at("budget") == 1);
    CHECK(j.at("method") == "randomized_greedy");
    CHECK(j.at("seed") == 3);
    CHECK(j.at("kept").size() == 1);
}
