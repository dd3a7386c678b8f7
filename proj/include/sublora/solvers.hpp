#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sublora/quadobj.hpp"

namespace sublora {

struct Selection {
    std::vector<int> kept;  // greedy variants record addition order
    Vec gains;              // marginal gain realized at each addition
    double value = 0.0;     // evaluate(obj, kept)
    int budget = 0;
    bool early_stopped = false;
    std::optional<std::uint64_t> seed;
    std::string method;

    nlohmann::json to_json() const;
};

// Picks the argmax marginal gain b times; ties go to the lowest index.
// With allow_early_stop the loop ends at the first step whose best gain
// is negative, otherwise exactly b elements are selected.
Selection greedy_max(const QuadObjective& obj, int b, bool allow_early_stop = false);

// Samples each addition with probability proportional to the clipped
// gain max{gain, 0}; when every clipped gain is zero the choice is
// uniform over the remaining elements so that exactly b elements are
// always returned.
Selection randomized_greedy_max(const QuadObjective& obj, int b, std::uint64_t seed);

// Exhaustive maximizer over all S with |S| <= b; value ties resolved by
// the lexicographically smallest kept set. Guarded to n <= 20.
Selection brute_force_max(const QuadObjective& obj, int b);

// Indices of the b largest scores, ties to the lowest index; returned
// ascending.
std::vector<int> top_k_select(const Vec& scores, int b);

}  // namespace sublora
