#include "sublora/properties.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sublora/hessproj.hpp"
#include "sublora/solvers.hpp"

namespace sublora::properties {

namespace {

double signed_magnitude(Rng& rng, double lo, double hi) {
    const double m = rng.uniform(lo, hi);
    return rng.uniform() < 0.5 ? -m : m;
}

}  // namespace

QuadObjective random_instance(Rng& rng, int n) {
    Vec x(static_cast<size_t>(n)), c(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        x[static_cast<size_t>(i)] = rng.uniform() < 0.1 ? 0.0 : signed_magnitude(rng, 0.1, 2.0);
        c[static_cast<size_t>(i)] = signed_magnitude(rng, 0.0, 1.0);
    }
    Mat q(n, n);
    for (int i = 0; i < n; ++i) {
        q(i, i) = signed_magnitude(rng, 0.0, 2.0);
        for (int j = i + 1; j < n; ++j) {
            const double v = rng.uniform() < 0.2 ? 0.0 : signed_magnitude(rng, 0.05, 1.5);
            q(i, j) = v;
            q(j, i) = v;
        }
    }
    return QuadObjective(std::move(c), std::move(q), std::move(x));
}

QuadObjective random_monotone_submodular(Rng& rng, int n) {
    Vec x(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<size_t>(i)] = signed_magnitude(rng, 0.2, 2.0);
    Mat q(n, n);
    for (int i = 0; i < n; ++i) {
        q(i, i) = rng.uniform(0.0, 2.0);
        for (int j = i + 1; j < n; ++j) {
            double v = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.05, 1.5);
            if (x[static_cast<size_t>(i)] * x[static_cast<size_t>(j)] < 0.0) v = -v;
            q(i, j) = v;
            q(j, i) = v;
        }
    }
    return QuadObjective(Vec(static_cast<size_t>(n), 0.0), std::move(q), std::move(x));
}

QuadObjective random_submodular(Rng& rng, int n) {
    QuadObjective base = random_monotone_submodular(rng, n);
    Vec c(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) c[static_cast<size_t>(i)] = signed_magnitude(rng, 0.1, 1.0);
    return QuadObjective(std::move(c), base.quadratic(), base.values());
}

double min_value_exhaustive(const QuadObjective& obj) {
    const int n = obj.size();
    if (n > 12) throw CapacityError("exhaustive min limited to n <= 12");
    double best = 0.0;
    bool have = false;
    std::vector<int> kept;
    const std::uint32_t count = 1u << n;
    for (std::uint32_t mask = 0; mask < count; ++mask) {
        kept.clear();
        for (int j = 0; j < n; ++j)
            if (mask & (1u << j)) kept.push_back(j);
        const double v = evaluate(obj, kept);
        if (!have || v < best) {
            have = true;
            best = v;
        }
    }
    return best;
}

namespace {

SuiteResult check_theorem_equivalence(Rng& rng, int instances) {
    int disagreements = 0;
    for (int k = 0; k < instances; ++k) {
        const int n = 2 + rng.uniform_int(7);
        const QuadObjective obj = random_instance(rng, n);
        if (is_pairwise_submodular(obj).first != verify_lattice_exhaustive(obj)) ++disagreements;
    }
    std::ostringstream os;
    os << instances << " instances, " << disagreements << " disagreements";
    return {"pairwise sign test vs exhaustive lattice check", disagreements == 0, os.str()};
}

SuiteResult check_gain_consistency(Rng& rng, int trials) {
    double worst = 0.0;
    for (int k = 0; k < trials; ++k) {
        const int n = 2 + rng.uniform_int(9);
        const QuadObjective obj = random_instance(rng, n);
        const int j = rng.uniform_int(n);
        std::vector<int> kept;
        for (int i = 0; i < n; ++i)
            if (i != j && rng.uniform() < 0.4) kept.push_back(i);
        GainState state(obj, kept);
        const double fast = state.marginal_gain(j);
        std::vector<int> with = kept;
        with.push_back(j);
        const double slow = evaluate(obj, with) - evaluate(obj, kept);
        const double rel = std::fabs(fast - slow) / std::max({1.0, std::fabs(fast), std::fabs(slow)});
        worst = std::max(worst, rel);
    }
    std::ostringstream os;
    os << trials << " trials, worst rel dev " << worst;
    return {"incremental marginal gains vs direct evaluation", worst <= 1e-9, os.str()};
}

SuiteResult check_projection(Rng& rng, int trials) {
    bool ok = true;
    for (int k = 0; k < trials && ok; ++k) {
        const int n = 2 + rng.uniform_int(5);
        const QuadObjective probe = random_instance(rng, n);
        const Mat h = probe.quadratic();
        const Vec x = probe.values();
        const Mat g = project_to_submodular(h, x);
        ok = ok && feasible(g, x, 0.0);
        const Mat g2 = project_to_submodular(g, x);
        ok = ok && g2.a == g.a;
        for (int i = 0; i < n; ++i) ok = ok && g(i, i) == h(i, i);
    }
    return {"submodular projection feasible, idempotent, diagonal-preserving", ok,
            std::to_string(trials) + " trials"};
}

SuiteResult check_greedy_ratio(Rng& rng, int instances) {
    const double ratio = 1.0 - 1.0 / std::exp(1.0);
    int violations = 0;
    for (int k = 0; k < instances; ++k) {
        const int n = 3 + rng.uniform_int(8);
        const int b = 1 + rng.uniform_int(std::min(n, 6));
        const QuadObjective obj = random_monotone_submodular(rng, n);
        const double shift = -evaluate(obj, {});  // nonnegative after shifting
        const Selection greedy = greedy_max(obj, b);
        const Selection brute = brute_force_max(obj, b);
        if (greedy.value + shift < ratio * (brute.value + shift) - 1e-9) ++violations;
    }
    std::ostringstream os;
    os << instances << " monotone submodular instances, " << violations << " ratio violations";
    return {"greedy achieves the (1-1/e) ratio", violations == 0, os.str()};
}

SuiteResult check_complement_and_neutrality(Rng& rng, int trials) {
    bool ok = true;
    for (int k = 0; k < trials && ok; ++k) {
        const int n = 2 + rng.uniform_int(8);
        QuadObjective base = random_instance(rng, n);
        std::vector<int> all(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
        ok = ok && evaluate(base, all) == 0.0;

        Vec x = base.values();
        const int j = rng.uniform_int(n);
        x[static_cast<size_t>(j)] = 0.0;
        const QuadObjective zeroed(base.linear(), base.quadratic(), x);
        std::vector<int> kept;
        for (int i = 0; i < n; ++i)
            if (i != j && rng.uniform() < 0.5) kept.push_back(i);
        ok = ok && GainState(zeroed, kept).marginal_gain(j) == 0.0;
    }
    return {"full-set value zero and zero-value neutrality", ok, std::to_string(trials) + " trials"};
}

SuiteResult check_monotone_gains(Rng& rng, int instances) {
    bool ok = true;
    for (int k = 0; k < instances && ok; ++k) {
        const int n = 2 + rng.uniform_int(7);
        const QuadObjective obj = random_monotone_submodular(rng, n);
        ok = ok && is_monotone_sufficient(obj) && verify_monotone_exhaustive(obj);
    }
    return {"monotone condition implies nonnegative gains", ok,
            std::to_string(instances) + " instances"};
}

SuiteResult check_nested_and_separable(Rng& rng, int instances) {
    bool ok = true;
    for (int k = 0; k < instances && ok; ++k) {
        const int n = 3 + rng.uniform_int(8);
        const QuadObjective obj = random_instance(rng, n);
        std::vector<int> prev;
        for (int b = 0; b <= n && ok; ++b) {
            std::vector<int> cur = greedy_max(obj, b).kept;
            std::sort(cur.begin(), cur.end());
            ok = ok && std::includes(cur.begin(), cur.end(), prev.begin(), prev.end());
            prev = std::move(cur);
        }
        // diagonal instances reduce to a per-element top-k
        Mat diag(n, n);
        for (int i = 0; i < n; ++i) diag(i, i) = obj.quadratic()(i, i);
        const QuadObjective sep(obj.linear(), diag, obj.values());
        const int b = rng.uniform_int(n + 1);
        Vec scores(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) {
            const double xj = sep.values()[static_cast<size_t>(j)];
            scores[static_cast<size_t>(j)] =
                -sep.linear()[static_cast<size_t>(j)] * xj + 0.5 * diag(j, j) * xj * xj;
        }
        std::vector<int> kept = greedy_max(sep, b).kept;
        std::sort(kept.begin(), kept.end());
        ok = ok && kept == top_k_select(scores, b);
    }
    return {"greedy nestedness and separable top-k reduction", ok,
            std::to_string(instances) + " instances"};
}

SuiteResult check_determinism(Rng& rng) {
    bool ok = true;
    for (int k = 0; k < 20 && ok; ++k) {
        const int n = 3 + rng.uniform_int(8);
        const QuadObjective obj = random_instance(rng, n);
        const int b = 1 + rng.uniform_int(n);
        const Selection a = greedy_max(obj, b);
        const Selection c = greedy_max(obj, b);
        ok = ok && a.kept == c.kept && a.value == c.value;
        const std::uint64_t seed = rng.next_u64();
        const Selection r1 = randomized_greedy_max(obj, b, seed);
        const Selection r2 = randomized_greedy_max(obj, b, seed);
        ok = ok && r1.kept == r2.kept;
    }
    return {"solver determinism for equal seeds", ok, "20 instances"};
}

}  // namespace

std::vector<SuiteResult> run_selftest(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SuiteResult> out;
    out.push_back(check_theorem_equivalence(rng, 200));
    out.push_back(check_gain_consistency(rng, 500));
    out.push_back(check_complement_and_neutrality(rng, 200));
    out.push_back(check_monotone_gains(rng, 100));
    out.push_back(check_projection(rng, 200));
    out.push_back(check_greedy_ratio(rng, 100));
    out.push_back(check_nested_and_separable(rng, 50));
    out.push_back(check_determinism(rng));
    return out;
}

}  // namespace sublora::properties
