#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sublora/hessproj.hpp"
#include "sublora/properties.hpp"
#include "sublora/quadobj.hpp"
#include "sublora/rng.hpp"

using namespace sublora;

namespace {

Mat toy_hessian() {
    Mat h(2, 2);
    h(0, 0) = 2.0;
    h(1, 1) = 2.0;
    h(0, 1) = h(1, 0) = -2.0;
    return h;
}

// Independent per-entry route: project each off-diagonal entry onto the
// half-line g * x_i x_j >= 0 by constrained least squares.
Mat per_entry_reference(const Mat& h, const Vec& x) {
    Mat g = h;
    for (int i = 0; i < h.rows; ++i)
        for (int j = 0; j < h.cols; ++j) {
            if (i == j) continue;
            const double p = x[static_cast<size_t>(i)] * x[static_cast<size_t>(j)];
            if (p > 0.0)
                g(i, j) = std::max(h(i, j), 0.0);
            else if (p < 0.0)
                g(i, j) = std::min(h(i, j), 0.0);
        }
    return g;
}

}  // namespace

TEST_CASE("toy projection zeroes the conflicting off-diagonal") {
    const Mat g = project_to_submodular(toy_hessian(), {1.0, 2.1});
    CHECK(g(0, 0) == 2.0);
    CHECK(g(1, 1) == 2.0);
    CHECK(g(0, 1) == 0.0);
    CHECK(g(1, 0) == 0.0);
}

TEST_CASE("feasible matrices are untouched") {
    Mat h(2, 2);
    h(0, 0) = 1.0;
    h(1, 1) = 3.0;
    h(0, 1) = h(1, 0) = 2.0;
    const Mat g = project_to_submodular(h, {1.0, 2.0});
    CHECK(g.a == h.a);
}

TEST_CASE("zero values leave rows untouched") {
    Rng rng(31);
    for (int k = 0; k < 50; ++k) {
        const QuadObjective probe = properties::random_instance(rng, 4);
        Vec x = probe.values();
        x[2] = 0.0;
        const Mat& h = probe.quadratic();
        const Mat g = project_to_submodular(h, x);
        for (int j = 0; j < 4; ++j) {
            CHECK(g(2, j) == h(2, j));
            CHECK(g(j, 2) == h(j, 2));
        }
    }
}

TEST_CASE("projection output satisfies the pairwise condition") {
    Rng rng(17);
    for (int k = 0; k < 200; ++k) {
        const int n = 2 + rng.uniform_int(6);
        const QuadObjective probe = properties::random_instance(rng, n);
        const Mat g = project_to_submodular(probe.quadratic(), probe.values());
        CHECK(feasible(g, probe.values(), 0.0));
        const QuadObjective proj(probe.linear(), g, probe.values());
        CHECK(is_pairwise_submodular(proj).first);
    }
}

TEST_CASE("idempotence and diagonal preservation are exact") {
    Rng rng(18);
    for (int k = 0; k < 200; ++k) {
        const int n = 2 + rng.uniform_int(6);
        const QuadObjective probe = properties::random_instance(rng, n);
        const Mat& h = probe.quadratic();
        const Mat g = project_to_submodular(h, probe.values());
        const Mat g2 = project_to_submodular(g, probe.values());
        CHECK(g2.a == g.a);
        for (int i = 0; i < n; ++i) CHECK(g(i, i) == h(i, i));
    }
}

TEST_CASE("projection equals the per-entry constrained least squares") {
    Rng rng(19);
    for (int k = 0; k < 200; ++k) {
        const int n = 2 + rng.uniform_int(5);
        const QuadObjective probe = properties::random_instance(rng, n);
        const Mat g = project_to_submodular(probe.quadratic(), probe.values());
        const Mat ref = per_entry_reference(probe.quadratic(), probe.values());
        CHECK(g.a == ref.a);
    }
}

TEST_CASE("zeroed entries count the sign violations") {
    Rng rng(20);
    for (int k = 0; k < 100; ++k) {
        const int n = 2 + rng.uniform_int(5);
        const QuadObjective probe = properties::random_instance(rng, n);
        const Mat& h = probe.quadratic();
        const Vec& x = probe.values();
        const Mat g = project_to_submodular(h, x);
        int zeroed = 0, violating = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                if (g(i, j) == 0.0 && h(i, j) != 0.0) ++zeroed;
                if (h(i, j) * x[static_cast<size_t>(i)] * x[static_cast<size_t>(j)] < 0.0)
                    ++violating;
            }
        CHECK(zeroed == violating);
    }
}

TEST_CASE("projection beats random feasible perturbations in Frobenius distance") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + rng.uniform_int(5);
        const QuadObjective probe = properties::random_instance(rng, n);
        const Mat& h = probe.quadratic();
        const Vec& x = probe.values();
        const Mat g = project_to_submodular(h, x);
        const double best = frobenius_distance(g, h);
        for (int k = 0; k < 1000; ++k) {
            Mat cand = h;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) {
                    const double pick = rng.uniform();
                    double v = cand(i, j);
                    if (pick < 1.0 / 3.0)
                        v = 0.0;
                    else if (pick < 2.0 / 3.0)
                        v = -v;
                    if (v * x[static_cast<size_t>(i)] * x[static_cast<size_t>(j)] < 0.0) v = 0.0;
                    cand(i, j) = v;
                    cand(j, i) = v;
                }
            REQUIRE(feasible(cand, x, 0.0));
            CHECK(frobenius_distance(cand, h) >= best - 1e-12);
        }
    }
}

TEST_CASE("feasible() examples") {
    Mat ones(2, 2);
    ones(0, 0) = ones(1, 1) = 1.0;
    ones(0, 1) = ones(1, 0) = 1.0;
    CHECK(!feasible(ones, {1.0, -1.0}, 0.0));
    CHECK(feasible(ones, {1.0, 1.0}, 0.0));
    Mat one(1, 1);
    one(0, 0) = -7.0;
    CHECK(feasible(one, {3.0}, 0.0));
}

TEST_CASE("asymmetric or non-finite input rejected") {
    Mat skew(2, 2);
    skew(0, 1) = 1.0;
    skew(1, 0) = -1.0;
    CHECK_THROWS_AS(project_to_submodular(skew, {1.0, 1.0}), std::invalid_argument);
    Mat bad(1, 1);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(project_to_submodular(bad, {1.0}), std::invalid_argument);
}
