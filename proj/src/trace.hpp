#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tp {

// One transport-payload-bearing packet. t is seconds relative to the first
// packet of its trace once assembled; parse_pcap emits absolute capture time.
struct PacketRecord {
    double t = 0.0;
    int d = 0;        // +1 user -> remote, -1 remote -> user
    int64_t s = 0;    // transport payload bytes
    std::string src_flow;       // canonical 5-tuple key, used only for scoping
    bool provider_flow = false; // flow touches a configured provider address
};

enum class FlowScope { primary, mixed };

const char* to_string(FlowScope s);
FlowScope flow_scope_from_string(const std::string& s);

struct Trace {
    std::string trace_id;
    std::optional<std::string> label;
    FlowScope flow_scope = FlowScope::primary;
    std::vector<PacketRecord> packets;  // sorted by t, first t == 0

    double duration() const { return packets.empty() ? 0.0 : packets.back().t; }
    bool empty() const { return packets.empty(); }
};

struct IngestConfig {
    std::vector<std::string> client_addrs;
    std::vector<std::string> provider_addrs;  // plain address or CIDR prefix
    FlowScope scope = FlowScope::primary;
    int64_t min_payload = 1;

    void validate() const;
};

// Classic pcap (both endiannesses), Ethernet link type. Emits one record per
// IPv4/IPv6 TCP or UDP packet involving a client address whose transport
// payload is >= cfg.min_payload. Timestamps are absolute capture time.
std::vector<PacketRecord> parse_pcap(std::span<const uint8_t> bytes, const IngestConfig& cfg);

// Splits records into sessions at silences > session_gap, applies the flow
// scope filter within each session, re-bases time so the first retained
// packet is at t = 0. Sessions left empty by the filter are discarded.
std::vector<Trace> assemble_traces(std::vector<PacketRecord> records, const IngestConfig& cfg,
                                   double session_gap, const std::string& id_prefix = "trace");

// Canonical trace JSONL, one object per line:
//   {"trace_id":str,"label":str|null,"flow_scope":"primary"|"mixed",
//    "packets":[[t,d,s],...]}
// write(read(x)) is byte-identical for canonical input.
std::vector<Trace> read_traces(const std::string& path);
std::vector<Trace> parse_traces_jsonl(const std::string& text, const std::string& origin);
void write_traces(const std::vector<Trace>& traces, const std::string& path);
std::string format_traces_jsonl(const std::vector<Trace>& traces);

// Enforces the canonical invariants (d in {-1,+1}, s >= 0 integral, t >= 0,
// sorted, first t exactly 0). line/origin feed the error message.
void validate_trace(const Trace& t, const std::string& origin, size_t line);

}  // namespace tp
