#include "sublora/metrics.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sublora/common.hpp"

namespace sublora {

const char* const kMetricsHeader =
    "run_id,family,lambda1,lambda2,method,budget,outer_round,stage,loss,rel_error,stage_seconds,"
    "kept_per_layer,seed";

std::string format_kept_per_layer(std::span<const int> counts) {
    if (counts.empty()) return "-";
    std::string out;
    for (size_t i = 0; i < counts.size(); ++i) {
        if (i) out += '/';
        out += std::to_string(counts[i]);
    }
    return out;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void append_metrics(const std::string& path, std::span<const MetricsRow> rows) {
    namespace fs = std::filesystem;
    bool need_header = true;
    std::error_code ec;
    if (fs::exists(path, ec) && fs::file_size(path, ec) > 0) need_header = false;
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot open metrics file for writing: " + path);
    if (need_header) out << kMetricsHeader << "\n";
    for (const auto& r : rows) {
        out << r.run_id << ',' << r.family << ',' << fmt_double(r.lambda1) << ','
            << fmt_double(r.lambda2) << ',' << r.method << ',' << r.budget << ',' << r.outer_round
            << ',' << r.stage << ',' << fmt_double(r.loss) << ',' << fmt_double(r.rel_error) << ','
            << fmt_double(r.stage_seconds) << ',' << r.kept_per_layer << ',' << r.seed << "\n";
    }
    if (!out) throw IoError("write to metrics file failed: " + path);
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics file: " + path);
    std::vector<MetricsRow> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            require_arg(line == kMetricsHeader, "unexpected metrics header");
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        require_arg(fields.size() == 13, "malformed metrics row");
        MetricsRow r;
        r.run_id = fields[0];
        r.family = fields[1];
        r.lambda1 = std::stod(fields[2]);
        r.lambda2 = std::stod(fields[3]);
        r.method = fields[4];
        r.budget = std::stoi(fields[5]);
        r.outer_round = std::stoi(fields[6]);
        r.stage = fields[7];
        r.loss = std::stod(fields[8]);
        r.rel_error = std::stod(fields[9]);
        r.stage_seconds = std::stod(fields[10]);
        r.kept_per_layer = fields[11];
        r.seed = std::stoull(fields[12]);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace sublora
