#include "mtam.hpp"

#include <algorithm>
#include <cmath>

#include "util.hpp"

namespace tp {

const char* to_string(WindowMode m) { return m == WindowMode::uniform ? "uniform" : "fixed_gap"; }

WindowMode window_mode_from_string(const std::string& s) {
    if (s == "uniform") return WindowMode::uniform;
    if (s == "fixed_gap" || s == "fixed-gap") return WindowMode::fixed_gap;
    fail(TP_E_INVALID, "unknown window mode '" + s + "' (expected uniform|fixed-gap)");
}

const char* to_string(NormScheme s) { return s == NormScheme::none ? "none" : "log1p"; }

NormScheme norm_scheme_from_string(const std::string& s) {
    if (s == "none") return NormScheme::none;
    if (s == "log1p") return NormScheme::log1p;
    fail(TP_E_INVALID, "unknown normalization '" + s + "' (expected none|log1p)");
}

void MtamConfig::validate() const {
    if (windows < 1) fail(TP_E_INVALID, "ConfigError: windows must be >= 1");
    if (mode == WindowMode::fixed_gap && !(gap > 0))
        fail(TP_E_INVALID, "ConfigError: gap must be > 0 in fixed_gap mode");
}

uint64_t MtamConfig::hash() const {
    std::string repr = "W=" + std::to_string(windows) + ";mode=" + to_string(mode) +
                       ";gap=" + fmt_double(gap) + ";clip_counts=" + fmt_double(clip_counts) +
                       ";clip_bytes=" + fmt_double(clip_bytes);
    return fnv1a64(repr);
}

Mtam extract_mtam(const Trace& trace, const MtamConfig& cfg) {
    cfg.validate();
    const int W = cfg.windows;
    Mtam m;
    m.windows = W;
    m.cells.assign(size_t(4) * size_t(W), 0.0);
    m.source_trace_id = trace.trace_id;
    m.config_hash = cfg.hash();

    if (cfg.mode == WindowMode::uniform && trace.packets.empty())
        fail(TP_E_EMPTY, "EmptyTrace: uniform windowing needs at least one packet (trace '" +
                             trace.trace_id + "')");

    const double width =
        cfg.mode == WindowMode::uniform ? trace.duration() / double(W) : cfg.gap;

    for (const auto& p : trace.packets) {
        int j;
        if (width <= 0.0) {
            // zero-duration trace in uniform mode: everything is window 0
            j = 0;
        } else {
            // smallest j with t < (j+1)*width, boundaries owned by the right window
            int lo = 0, hi = W;  // invariant: t >= lo*width, answer in [lo, hi]
            while (lo < hi) {
                int mid = lo + (hi - lo) / 2;
                if (p.t < double(mid + 1) * width)
                    hi = mid;
                else
                    lo = mid + 1;
            }
            j = lo;
        }
        if (j >= W) {
            if (cfg.mode == WindowMode::uniform) {
                j = W - 1;  // t == duration belongs to the last window
            } else {
                ++m.dropped_packets;
                continue;
            }
        }
        int count_row = p.d > 0 ? Mtam::kCountOut : Mtam::kCountIn;
        int bytes_row = p.d > 0 ? Mtam::kBytesOut : Mtam::kBytesIn;
        m.at(count_row, j) += 1.0;
        m.at(bytes_row, j) += double(p.s);
    }

    if (cfg.clip_counts >= 0) {
        for (int j = 0; j < W; ++j) {
            m.at(Mtam::kCountIn, j) = std::min(m.at(Mtam::kCountIn, j), cfg.clip_counts);
            m.at(Mtam::kCountOut, j) = std::min(m.at(Mtam::kCountOut, j), cfg.clip_counts);
        }
    }
    if (cfg.clip_bytes >= 0) {
        for (int j = 0; j < W; ++j) {
            m.at(Mtam::kBytesIn, j) = std::min(m.at(Mtam::kBytesIn, j), cfg.clip_bytes);
            m.at(Mtam::kBytesOut, j) = std::min(m.at(Mtam::kBytesOut, j), cfg.clip_bytes);
        }
    }
    return m;
}

Mtam normalize(Mtam m, NormScheme scheme) {
    if (scheme == NormScheme::log1p)
        for (auto& c : m.cells) c = std::log1p(c);
    return m;
}

BatchExtract batch_extract(const std::vector<Trace>& traces, const MtamConfig& cfg) {
    cfg.validate();
    BatchExtract out;
    out.config_hash = cfg.hash();
    for (size_t i = 0; i < traces.size(); ++i) {
        const Trace& t = traces[i];
        if (!t.label || t.label->empty()) {
            out.failures.push_back({i, t.trace_id, TP_E_INVALID, "trace is unlabeled"});
            continue;
        }
        try {
            out.mtams.push_back(extract_mtam(t, cfg));
            out.labels.push_back(*t.label);
        } catch (const Error& e) {
            out.failures.push_back({i, t.trace_id, e.code(), e.what()});
        }
    }
    return out;
}

}  // namespace tp
