#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "error.hpp"
#include "rng.hpp"
#include "test_util.hpp"
#include "trace.hpp"
#include "util.hpp"

using namespace tp;
using tputil::PcapBuilder;
using tputil::PcapPacket;

namespace {

IngestConfig basic_cfg() {
    IngestConfig cfg;
    cfg.client_addrs = {"192.168.1.5"};
    cfg.provider_addrs = {"10.0.0.0/8"};
    return cfg;
}

std::span<const uint8_t> as_span(const std::vector<uint8_t>& v) { return {v.data(), v.size()}; }

}  // namespace

TEST_CASE("single TCP packet from client parses field by field") {
    PcapBuilder b;
    PcapPacket p;
    p.t = 5.25;
    p.src = "192.168.1.5";
    p.dst = "10.0.0.2";
    p.payload = 100;
    b.add(p);
    auto recs = parse_pcap(as_span(b.bytes), basic_cfg());
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].d == 1);
    CHECK(recs[0].s == 100);
    CHECK(recs[0].t == doctest::Approx(5.25).epsilon(1e-9));
    CHECK(recs[0].provider_flow);
    CHECK(recs[0].src_flow.find("tcp") == 0);
}

TEST_CASE("byte-swapped magic yields the identical record list") {
    auto build = [&](bool swapped) {
        PcapBuilder b(swapped);
        PcapPacket p;
        p.t = 1.5;
        p.src = "192.168.1.5";
        p.dst = "10.0.0.2";
        p.payload = 42;
        b.add(p);
        PcapPacket q = p;
        q.t = 2.0;
        q.src = "10.0.0.2";
        q.dst = "192.168.1.5";
        q.payload = 1400;
        b.add(q);
        return parse_pcap(as_span(b.bytes), basic_cfg());
    };
    auto a = build(false), c = build(true);
    REQUIRE(a.size() == c.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].t == c[i].t);
        CHECK(a[i].d == c[i].d);
        CHECK(a[i].s == c[i].s);
        CHECK(a[i].src_flow == c[i].src_flow);
    }
}

TEST_CASE("zero-payload ACK is dropped at the default threshold") {
    PcapBuilder b;
    PcapPacket p;
    p.src = "192.168.1.5";
    p.dst = "10.0.0.2";
    p.payload = 0;
    b.add(p);
    CHECK(parse_pcap(as_span(b.bytes), basic_cfg()).empty());

    IngestConfig keep = basic_cfg();
    keep.min_payload = 0;
    auto recs = parse_pcap(as_span(b.bytes), keep);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].s == 0);
}

TEST_CASE("direction is a pure function of the configured addresses") {
    Rng rng(99);
    PcapBuilder b;
    std::vector<int> expect;  // +1, -1, or 0 for dropped
    for (int i = 0; i < 200; ++i) {
        PcapPacket p;
        p.t = 0.01 * i;
        p.payload = 1 + int(rng.next_below(1400));
        int kind = int(rng.next_below(3));
        if (kind == 0) {
            p.src = "192.168.1.5";
            p.dst = "10.0.0.2";
            expect.push_back(1);
        } else if (kind == 1) {
            p.src = "10.0.0.2";
            p.dst = "192.168.1.5";
            expect.push_back(-1);
        } else {
            p.src = "172.16.3.3";  // neither endpoint is the client
            p.dst = "10.0.0.2";
            expect.push_back(0);
        }
        b.add(p);
    }
    auto recs = parse_pcap(as_span(b.bytes), basic_cfg());
    std::vector<int> kept;
    for (int e : expect)
        if (e != 0) kept.push_back(e);
    REQUIRE(recs.size() == kept.size());
    for (size_t i = 0; i < recs.size(); ++i) CHECK(recs[i].d == kept[i]);
}

TEST_CASE("UDP and IPv6 payload lengths come from the right headers") {
    PcapBuilder b;
    PcapPacket u;
    u.src = "192.168.1.5";
    u.dst = "10.0.0.2";
    u.udp = true;
    u.payload = 77;
    b.add(u);
    auto recs = parse_pcap(as_span(b.bytes), basic_cfg());
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].s == 77);
    CHECK(recs[0].src_flow.find("udp") == 0);

    PcapBuilder b6;
    PcapPacket p6;
    p6.v6 = true;
    p6.src = "5";  // 2001:db8::5
    p6.dst = "2";
    p6.payload = 123;
    b6.add(p6);
    IngestConfig cfg6;
    cfg6.client_addrs = {"2001:db8::5"};
    cfg6.provider_addrs = {"2001:db8::/32"};
    auto recs6 = parse_pcap(as_span(b6.bytes), cfg6);
    REQUIRE(recs6.size() == 1);
    CHECK(recs6[0].d == 1);
    CHECK(recs6[0].s == 123);
    CHECK(recs6[0].provider_flow);
}

TEST_CASE("malformed captures raise the documented errors") {
    IngestConfig cfg = basic_cfg();

    std::vector<uint8_t> tiny{0x01, 0x02};
    CHECK_THROWS_WITH_AS(parse_pcap(as_span(tiny), cfg), doctest::Contains("MalformedHeader"),
                         Error);

    PcapBuilder bad;
    bad.bytes[0] = 0x00;  // corrupt the magic
    CHECK_THROWS_WITH_AS(parse_pcap(as_span(bad.bytes), cfg), doctest::Contains("MalformedHeader"),
                         Error);

    PcapBuilder loop(false, /*linktype=*/101);
    CHECK_THROWS_WITH_AS(parse_pcap(as_span(loop.bytes), cfg),
                         doctest::Contains("UnsupportedLinkType"), Error);

    PcapBuilder trunc;
    PcapPacket p;
    p.src = "192.168.1.5";
    p.dst = "10.0.0.2";
    trunc.add(p);
    trunc.bytes.resize(trunc.bytes.size() - 10);  // cut into the frame
    CHECK_THROWS_WITH_AS(parse_pcap(as_span(trunc.bytes), cfg),
                         doctest::Contains("TruncatedPacket"), Error);

    PcapBuilder header_only;
    header_only.raw({0x01, 0x02, 0x03});  // partial record header
    CHECK_THROWS_WITH_AS(parse_pcap(as_span(header_only.bytes), cfg),
                         doctest::Contains("TruncatedPacket"), Error);
}

TEST_CASE("ingest config invariants") {
    IngestConfig cfg;
    CHECK_THROWS_AS(cfg.validate(), Error);  // empty client set
    cfg.client_addrs = {"1.2.3.4"};
    cfg.provider_addrs = {"1.2.3.4"};
    CHECK_THROWS_AS(cfg.validate(), Error);  // overlap
}

// ----------------------------------------------------------------- assembly

namespace {

PacketRecord rec(double t, int d, int64_t s, bool provider = true) {
    PacketRecord r;
    r.t = t;
    r.d = d;
    r.s = s;
    r.provider_flow = provider;
    r.src_flow = provider ? "tcp|a|b" : "tcp|c|d";
    return r;
}

}  // namespace

TEST_CASE("session gap splits and re-bases") {
    std::vector<PacketRecord> records{rec(10.0, 1, 10), rec(10.5, -1, 20), rec(99.0, 1, 30)};
    auto traces = assemble_traces(records, basic_cfg(), 30.0);
    REQUIRE(traces.size() == 2);
    REQUIRE(traces[0].packets.size() == 2);
    CHECK(traces[0].packets[0].t == 0.0);
    CHECK(traces[0].packets[1].t == 0.5);
    CHECK(traces[1].packets.size() == 1);
    CHECK(traces[1].packets[0].t == 0.0);
}

TEST_CASE("scope filter keeps only provider flows in primary mode") {
    std::vector<PacketRecord> records{rec(0.0, 1, 10, true), rec(0.1, -1, 20, false),
                                      rec(0.2, -1, 30, true)};
    IngestConfig cfg = basic_cfg();
    cfg.scope = FlowScope::primary;
    auto primary = assemble_traces(records, cfg, 30.0);
    REQUIRE(primary.size() == 1);
    CHECK(primary[0].packets.size() == 2);

    cfg.scope = FlowScope::mixed;
    auto mixed = assemble_traces(records, cfg, 30.0);
    REQUIRE(mixed.size() == 1);
    CHECK(mixed[0].packets.size() == 3);
    CHECK(mixed[0].packets[1].s == 20);  // interleaved by time
}

TEST_CASE("assembly is idempotent and scope-monotone") {
    Rng rng(7);
    std::vector<PacketRecord> records;
    double t = 100.0;
    for (int i = 0; i < 300; ++i) {
        t += rng.next_double() < 0.05 ? 45.0 : rng.next_double();
        records.push_back(rec(t, rng.next_double() < 0.5 ? 1 : -1,
                              1 + int64_t(rng.next_below(1000)), rng.next_double() < 0.7));
    }
    IngestConfig cfg = basic_cfg();
    cfg.scope = FlowScope::primary;
    auto primary = assemble_traces(records, cfg, 30.0);
    cfg.scope = FlowScope::mixed;
    auto mixed = assemble_traces(records, cfg, 30.0);

    // idempotence: each assembled trace re-assembles to itself
    for (const auto& tr : primary) {
        auto again = assemble_traces(tr.packets, cfg, 30.0);
        REQUIRE(again.size() == 1);
        REQUIRE(again[0].packets.size() == tr.packets.size());
        for (size_t i = 0; i < tr.packets.size(); ++i) {
            CHECK(again[0].packets[i].t == tr.packets[i].t);
            CHECK(again[0].packets[i].s == tr.packets[i].s);
        }
    }

    // monotonicity: primary keeps exactly the provider-flow packets
    auto count_packets = [](const std::vector<Trace>& ts) {
        size_t n = 0;
        for (const auto& t2 : ts) n += t2.packets.size();
        return n;
    };
    CHECK(count_packets(primary) <= count_packets(mixed));
    size_t provider_total = 0;
    for (const auto& r : records)
        if (r.provider_flow) ++provider_total;
    CHECK(count_packets(primary) == provider_total);
}

// -------------------------------------------------------------------- jsonl

TEST_CASE("canonical JSONL round-trips byte-identically") {
    std::vector<Trace> traces(2);
    traces[0].trace_id = "t0";
    traces[0].label = "agentA";
    traces[0].flow_scope = FlowScope::primary;
    traces[0].packets = {rec(0.0, 1, 100), rec(1.0 / 3.0, 1, 7), rec(0.5, -1, 1400)};
    std::sort(traces[0].packets.begin(), traces[0].packets.end(),
              [](auto& a, auto& b) { return a.t < b.t; });
    traces[1].trace_id = "t1";
    traces[1].flow_scope = FlowScope::mixed;  // label stays null
    traces[1].packets = {rec(0.0, -1, 55)};

    std::string path = tputil::tmp_path("roundtrip.jsonl");
    write_traces(traces, path);
    std::string first = read_file(path);
    auto loaded = read_traces(path);
    REQUIRE(loaded.size() == 2);
    CHECK(!loaded[1].label.has_value());
    write_traces(loaded, path);
    CHECK(read_file(path) == first);
}

TEST_CASE("schema violations name the offending field") {
    auto expect_schema = [](const std::string& line, const std::string& needle, tp_status code) {
        try {
            parse_traces_jsonl(line + "\n", "mem");
            FAIL_CHECK("expected a schema error for: " << line);
        } catch (const Error& e) {
            CHECK(e.code() == code);
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_schema(R"({"trace_id":"x","label":null,"flow_scope":"primary","packets":[[0.0,0,5]]})",
                  "d", TP_E_SCHEMA);
    expect_schema(R"({"trace_id":"x","label":null,"flow_scope":"primary","packets":[[0.0,1,-3]]})",
                  "s", TP_E_SCHEMA);
    expect_schema(
        R"({"trace_id":"x","label":null,"flow_scope":"primary","packets":[[0.0,1,5],[2.0,1,5],[1.0,1,5]]})",
        "order", TP_E_ORDER);
    expect_schema(R"({"trace_id":"x","label":null,"flow_scope":"primary","packets":[[0.5,1,5]]})",
                  "packets[0].t", TP_E_SCHEMA);
    expect_schema(R"({"trace_id":"x","label":null,"flow_scope":"sideways","packets":[]})",
                  "flow_scope", TP_E_SCHEMA);
    expect_schema(R"({"trace_id":"","label":null,"flow_scope":"primary","packets":[]})",
                  "trace_id", TP_E_SCHEMA);
    expect_schema("{not json", "invalid JSON", TP_E_SCHEMA);
}

TEST_CASE("line numbers are reported for later lines") {
    std::string text =
        R"({"trace_id":"a","label":null,"flow_scope":"primary","packets":[]})"
        "\n"
        R"({"trace_id":"b","label":null,"flow_scope":"primary","packets":[[0.0,2,1]]})"
        "\n";
    try {
        parse_traces_jsonl(text, "mem");
        FAIL_CHECK("expected failure");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("mem:2") != std::string::npos);
    }
}
