#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sublora {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MetricsRow {
    std::string run_id;
    std::string family;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::string method;
    int budget = 0;
    int outer_round = 0;
    std::string stage;
    double loss = 0.0;
    double rel_error = 0.0;
    double stage_seconds = 0.0;
    std::string kept_per_layer;  // '/'-joined counts, "-" when not applicable
    std::uint64_t seed = 0;
};

extern const char* const kMetricsHeader;

std::string format_kept_per_layer(std::span<const int> counts);

// Appends rows, writing the header only when the file is new or empty.
// Doubles are serialized with 17 significant digits so a parse-back
// recovers them exactly.
void append_metrics(const std::string& path, std::span<const MetricsRow> rows);

std::vector<MetricsRow> read_metrics(const std::string& path);

}  // namespace sublora
