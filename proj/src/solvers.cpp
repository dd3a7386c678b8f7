#include "sublora/solvers.hpp"

#include <algorithm>
#include <bit>

#include "sublora/common.hpp"
#include "sublora/rng.hpp"

namespace sublora {

nlohmann::json Selection::to_json() const {
    nlohmann::json j{{"kept", kept},   {"gains", gains},
                     {"value", value}, {"budget", budget},
                     {"method", method}, {"early_stopped", early_stopped}};
    if (seed) j["seed"] = *seed;
    return j;
}

Selection greedy_max(const QuadObjective& obj, int b, bool allow_early_stop) {
    const int n = obj.size();
    require_arg(b >= 0 && b <= n, "budget out of range");
    Selection sel;
    sel.budget = b;
    sel.method = allow_early_stop ? "greedy_early_stop" : "greedy";
    GainState state(obj, {});
    for (int step = 0; step < b; ++step) {
        int best = -1;
        double best_gain = 0.0;
        for (int j = 0; j < n; ++j) {
            if (state.kept_mask()[static_cast<size_t>(j)]) continue;
            const double g = state.marginal_gain(j);
            if (best < 0 || g > best_gain) {
                best = j;
                best_gain = g;
            }
        }
        if (allow_early_stop && best_gain < 0.0) {
            sel.early_stopped = true;
            break;
        }
        state.add(best);
        sel.kept.push_back(best);
        sel.gains.push_back(best_gain);
    }
    sel.value = evaluate(obj, sel.kept);
    return sel;
}

Selection randomized_greedy_max(const QuadObjective& obj, int b, std::uint64_t seed) {
    const int n = obj.size();
    require_arg(b >= 0 && b <= n, "budget out of range");
    Selection sel;
    sel.budget = b;
    sel.method = "randomized_greedy";
    sel.seed = seed;
    Rng rng(seed);
    GainState state(obj, {});
    Vec gain(static_cast<size_t>(n), 0.0);
    for (int step = 0; step < b; ++step) {
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            if (state.kept_mask()[static_cast<size_t>(j)]) continue;
            const double g = state.marginal_gain(j);
            gain[static_cast<size_t>(j)] = g;
            total += std::max(g, 0.0);
        }
        int pick = -1;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
                if (state.kept_mask()[static_cast<size_t>(j)]) continue;
                const double w = std::max(gain[static_cast<size_t>(j)], 0.0);
                if (w == 0.0) continue;
                acc += w;
                pick = j;
                if (acc > r) break;
            }
        } else {
            // All clipped gains vanish; fall back to a uniform choice so
            // the budget is met exactly.
            int remaining = n - state.kept_count();
            int target = rng.uniform_int(remaining);
            for (int j = 0; j < n; ++j) {
                if (state.kept_mask()[static_cast<size_t>(j)]) continue;
                if (target-- == 0) {
                    pick = j;
                    break;
                }
            }
        }
        state.add(pick);
        sel.kept.push_back(pick);
        sel.gains.push_back(gain[static_cast<size_t>(pick)]);
    }
    sel.value = evaluate(obj, sel.kept);
    return sel;
}

namespace {

std::vector<int> mask_to_indices(std::uint32_t mask, int n) {
    std::vector<int> idx;
    for (int j = 0; j < n; ++j)
        if (mask & (1u << j)) idx.push_back(j);
    return idx;
}

}  // namespace

Selection brute_force_max(const QuadObjective& obj, int b) {
    const int n = obj.size();
    require_arg(b >= 0 && b <= n, "budget out of range");
    if (n > 20) throw CapacityError("brute force limited to n <= 20");
    Selection sel;
    sel.budget = b;
    sel.method = "brute_force";
    double best_value = 0.0;
    std::uint32_t best_mask = 0;
    bool have = false;
    const std::uint32_t count = 1u << n;
    for (std::uint32_t mask = 0; mask < count; ++mask) {
        if (std::popcount(mask) > b) continue;
        const auto kept = mask_to_indices(mask, n);
        const double v = evaluate(obj, kept);
        if (!have || v > best_value) {
            have = true;
            best_value = v;
            best_mask = mask;
        } else if (v == best_value) {
            const auto cur = mask_to_indices(best_mask, n);
            if (std::lexicographical_compare(kept.begin(), kept.end(), cur.begin(), cur.end()))
                best_mask = mask;
        }
    }
    sel.kept = mask_to_indices(best_mask, n);
    sel.value = best_value;
    return sel;
}

std::vector<int> top_k_select(const Vec& scores, int b) {
    const int n = static_cast<int>(scores.size());
    require_arg(b >= 0 && b <= n, "budget out of range");
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
        if (scores[static_cast<size_t>(i)] != scores[static_cast<size_t>(j)])
            return scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(j)];
        return i < j;
    });
    std::vector<int> kept(order.begin(), order.begin() + b);
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace sublora
