#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trace.hpp"

namespace tp {

enum class WindowMode { uniform, fixed_gap };
enum class NormScheme { none, log1p };

const char* to_string(WindowMode m);
WindowMode window_mode_from_string(const std::string& s);
const char* to_string(NormScheme s);
NormScheme norm_scheme_from_string(const std::string& s);

struct MtamConfig {
    int windows = 1800;
    WindowMode mode = WindowMode::uniform;
    double gap = 0.05;       // seconds per window, fixed_gap mode only
    double clip_counts = -1; // per-cell cap; < 0 disables
    double clip_bytes = -1;

    double max_duration() const { return gap * windows; }  // fixed_gap horizon
    void validate() const;
    uint64_t hash() const;
};

// 4 rows x W: [count_in, count_out, bytes_in, bytes_out], logically a
// 2(metric) x 2(direction) x W tensor.
struct Mtam {
    enum Row { kCountIn = 0, kCountOut = 1, kBytesIn = 2, kBytesOut = 3 };

    int windows = 0;
    std::vector<double> cells;  // 4 * windows
    std::string source_trace_id;
    uint64_t config_hash = 0;
    int64_t dropped_packets = 0;  // fixed_gap packets beyond the horizon

    double& at(int row, int j) { return cells[size_t(row) * size_t(windows) + size_t(j)]; }
    double at(int row, int j) const { return cells[size_t(row) * size_t(windows) + size_t(j)]; }
};

// Window ownership: boundaries b_j = j * width; a packet at time t belongs to
// the smallest j with t < b_{j+1} (boundary packets go right). In uniform
// mode t == duration lands in window W-1; in fixed_gap mode t >= W * gap is
// dropped and counted.
Mtam extract_mtam(const Trace& trace, const MtamConfig& cfg);

Mtam normalize(Mtam m, NormScheme scheme);

struct ExtractFailure {
    size_t index = 0;
    std::string trace_id;
    int code = 0;
    std::string message;
};

struct BatchExtract {
    std::vector<Mtam> mtams;           // order-preserving over successes
    std::vector<std::string> labels;   // parallel to mtams
    std::vector<ExtractFailure> failures;
    uint64_t config_hash = 0;
};

// Requires labeled traces; unlabeled or failing traces become failure entries.
BatchExtract batch_extract(const std::vector<Trace>& traces, const MtamConfig& cfg);

}  // namespace tp
