#include "trace.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "util.hpp"

namespace tp {

const char* to_string(FlowScope s) { return s == FlowScope::primary ? "primary" : "mixed"; }

FlowScope flow_scope_from_string(const std::string& s) {
    if (s == "primary") return FlowScope::primary;
    if (s == "mixed") return FlowScope::mixed;
    fail(TP_E_INVALID, "unknown flow scope '" + s + "' (expected primary|mixed)");
}

void IngestConfig::validate() const {
    if (client_addrs.empty()) fail(TP_E_INVALID, "ingest config: client_addrs must not be empty");
    for (const auto& c : client_addrs)
        for (const auto& p : provider_addrs)
            if (c == p)
                fail(TP_E_INVALID, "ingest config: address '" + c +
                                       "' appears in both client and provider sets");
    if (min_payload < 0) fail(TP_E_INVALID, "ingest config: min_payload must be >= 0");
}

std::vector<Trace> assemble_traces(std::vector<PacketRecord> records, const IngestConfig& cfg,
                                   double session_gap, const std::string& id_prefix) {
    cfg.validate();
    if (session_gap < 0) fail(TP_E_INVALID, "session_gap must be >= 0");
    std::stable_sort(records.begin(), records.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.t < b.t; });

    std::vector<Trace> out;
    size_t start = 0;
    auto flush = [&](size_t begin, size_t end) {
        Trace tr;
        tr.flow_scope = cfg.scope;
        for (size_t i = begin; i < end; ++i) {
            if (cfg.scope == FlowScope::primary && !records[i].provider_flow) continue;
            tr.packets.push_back(records[i]);
        }
        if (tr.packets.empty()) return;
        double base = tr.packets.front().t;
        for (auto& p : tr.packets) p.t -= base;
        tr.packets.front().t = 0.0;  // exact, regardless of fp residue
        tr.trace_id = id_prefix + "-" + std::to_string(out.size());
        out.push_back(std::move(tr));
    };
    for (size_t i = 1; i < records.size(); ++i) {
        if (records[i].t - records[i - 1].t > session_gap) {
            flush(start, i);
            start = i;
        }
    }
    if (!records.empty()) flush(start, records.size());
    return out;
}

void validate_trace(const Trace& t, const std::string& origin, size_t line) {
    auto where = [&](const std::string& field) {
        return origin + ":" + std::to_string(line) + ": field '" + field + "'";
    };
    if (t.trace_id.empty()) fail(TP_E_SCHEMA, where("trace_id") + " must be a non-empty string");
    for (size_t i = 0; i < t.packets.size(); ++i) {
        const auto& p = t.packets[i];
        std::string pk = "packets[" + std::to_string(i) + "]";
        if (p.d != 1 && p.d != -1)
            fail(TP_E_SCHEMA, where(pk + ".d") + " must be -1 or +1, got " + std::to_string(p.d));
        if (p.s < 0)
            fail(TP_E_SCHEMA, where(pk + ".s") + " must be >= 0, got " + std::to_string(p.s));
        if (!(p.t >= 0.0) || !std::isfinite(p.t))
            fail(TP_E_SCHEMA, where(pk + ".t") + " must be a finite number >= 0");
        if (i > 0 && p.t < t.packets[i - 1].t)
            fail(TP_E_ORDER, origin + ":" + std::to_string(line) + ": packets out of time order at index " +
                                 std::to_string(i));
    }
    if (!t.packets.empty() && t.packets.front().t != 0.0)
        fail(TP_E_SCHEMA, where("packets[0].t") + " must be exactly 0 (times are re-based)");
}

static Trace trace_from_json(const nlohmann::json& j, const std::string& origin, size_t line) {
    auto where = [&](const std::string& field) {
        return origin + ":" + std::to_string(line) + ": field '" + field + "'";
    };
    if (!j.is_object()) fail(TP_E_SCHEMA, origin + ":" + std::to_string(line) + ": expected a JSON object");
    Trace t;
    if (!j.contains("trace_id") || !j["trace_id"].is_string())
        fail(TP_E_SCHEMA, where("trace_id") + " must be a string");
    t.trace_id = j["trace_id"].get<std::string>();
    if (!j.contains("label") || (!j["label"].is_string() && !j["label"].is_null()))
        fail(TP_E_SCHEMA, where("label") + " must be a string or null");
    if (j["label"].is_string()) t.label = j["label"].get<std::string>();
    if (!j.contains("flow_scope") || !j["flow_scope"].is_string())
        fail(TP_E_SCHEMA, where("flow_scope") + " must be \"primary\" or \"mixed\"");
    {
        std::string fs = j["flow_scope"].get<std::string>();
        if (fs != "primary" && fs != "mixed")
            fail(TP_E_SCHEMA, where("flow_scope") + " must be \"primary\" or \"mixed\"");
        t.flow_scope = flow_scope_from_string(fs);
    }
    if (!j.contains("packets") || !j["packets"].is_array())
        fail(TP_E_SCHEMA, where("packets") + " must be an array");
    size_t i = 0;
    for (const auto& e : j["packets"]) {
        std::string pk = "packets[" + std::to_string(i) + "]";
        if (!e.is_array() || e.size() != 3)
            fail(TP_E_SCHEMA, where(pk) + " must be a [t, d, s] triple");
        if (!e[0].is_number()) fail(TP_E_SCHEMA, where(pk + ".t") + " must be a number");
        if (!e[1].is_number_integer()) fail(TP_E_SCHEMA, where(pk + ".d") + " must be an integer");
        if (!e[2].is_number_integer()) fail(TP_E_SCHEMA, where(pk + ".s") + " must be an integer");
        PacketRecord p;
        p.t = e[0].get<double>();
        p.d = e[1].get<int>();
        p.s = e[2].get<int64_t>();
        t.packets.push_back(p);
        ++i;
    }
    validate_trace(t, origin, line);
    return t;
}

std::vector<Trace> parse_traces_jsonl(const std::string& text, const std::string& origin) {
    std::vector<Trace> out;
    size_t pos = 0, lineno = 0;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        std::string line =
            nl == std::string::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        pos = nl == std::string::npos ? text.size() : nl + 1;
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(TP_E_SCHEMA, origin + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
        }
        out.push_back(trace_from_json(j, origin, lineno));
    }
    return out;
}

std::vector<Trace> read_traces(const std::string& path) {
    return parse_traces_jsonl(read_file(path), path);
}

std::string format_traces_jsonl(const std::vector<Trace>& traces) {
    std::string out;
    for (const auto& t : traces) {
        nlohmann::ordered_json j;
        j["trace_id"] = t.trace_id;
        if (t.label)
            j["label"] = *t.label;
        else
            j["label"] = nullptr;
        j["flow_scope"] = to_string(t.flow_scope);
        auto pkts = nlohmann::ordered_json::array();
        for (const auto& p : t.packets) {
            auto e = nlohmann::ordered_json::array();
            e.push_back(p.t);  // always serialized as a float
            e.push_back(p.d);
            e.push_back(p.s);
            pkts.push_back(std::move(e));
        }
        j["packets"] = std::move(pkts);
        out += j.dump();
        out += '\n';
    }
    return out;
}

void write_traces(const std::vector<Trace>& traces, const std::string& path) {
    write_file(path, format_traces_jsonl(traces));
}

}  // namespace tp
