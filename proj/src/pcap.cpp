#include <arpa/inet.h>

#include <array>
#include <cstring>

#include "trace.hpp"
#include "util.hpp"

// Classic pcap only (24-byte global header, 16-byte record headers, both
// endiannesses), Ethernet frames, IPv4/IPv6, TCP/UDP. Sizes come from header
// fields, so snaplen-truncated payloads still report their true length.

namespace tp {
namespace {

struct IpAddr {
    int family = 0;  // AF_INET or AF_INET6
    std::array<uint8_t, 16> bytes{};

    bool operator==(const IpAddr& o) const { return family == o.family && bytes == o.bytes; }
};

struct Prefix {
    IpAddr addr;
    int bits = 0;
};

IpAddr parse_ip(const std::string& s) {
    IpAddr a;
    if (inet_pton(AF_INET, s.c_str(), a.bytes.data()) == 1) {
        a.family = AF_INET;
        return a;
    }
    if (inet_pton(AF_INET6, s.c_str(), a.bytes.data()) == 1) {
        a.family = AF_INET6;
        return a;
    }
    fail(TP_E_INVALID, "not an IP address: '" + s + "'");
}

Prefix parse_prefix(const std::string& s) {
    Prefix p;
    auto slash = s.find('/');
    if (slash == std::string::npos) {
        p.addr = parse_ip(s);
        p.bits = p.addr.family == AF_INET ? 32 : 128;
        return p;
    }
    p.addr = parse_ip(s.substr(0, slash));
    int maxbits = p.addr.family == AF_INET ? 32 : 128;
    try {
        p.bits = std::stoi(s.substr(slash + 1));
    } catch (...) {
        fail(TP_E_INVALID, "bad prefix length in '" + s + "'");
    }
    if (p.bits < 0 || p.bits > maxbits)
        fail(TP_E_INVALID, "bad prefix length in '" + s + "'");
    return p;
}

bool prefix_match(const Prefix& p, const IpAddr& a) {
    if (p.addr.family != a.family) return false;
    int full = p.bits / 8, rem = p.bits % 8;
    if (std::memcmp(p.addr.bytes.data(), a.bytes.data(), size_t(full)) != 0) return false;
    if (rem == 0) return true;
    uint8_t mask = uint8_t(0xff << (8 - rem));
    return (p.addr.bytes[size_t(full)] & mask) == (a.bytes[size_t(full)] & mask);
}

std::string ip_to_string(const IpAddr& a) {
    char buf[INET6_ADDRSTRLEN] = {0};
    inet_ntop(a.family, a.bytes.data(), buf, sizeof(buf));
    return buf;
}

struct Resolved {
    std::vector<IpAddr> clients;
    std::vector<Prefix> providers;

    bool is_client(const IpAddr& a) const {
        for (const auto& c : clients)
            if (c == a) return true;
        return false;
    }
    bool is_provider(const IpAddr& a) const {
        for (const auto& p : providers)
            if (prefix_match(p, a)) return true;
        return false;
    }
};

class Reader {
public:
    Reader(std::span<const uint8_t> b, bool swapped) : b_(b), swapped_(swapped) {}

    size_t remaining(size_t pos) const { return pos <= b_.size() ? b_.size() - pos : 0; }

    uint16_t u16(size_t pos) const {
        uint16_t v;
        std::memcpy(&v, b_.data() + pos, 2);
        return swapped_ ? uint16_t((v >> 8) | (v << 8)) : v;
    }
    uint32_t u32(size_t pos) const {
        uint32_t v;
        std::memcpy(&v, b_.data() + pos, 4);
        return swapped_ ? __builtin_bswap32(v) : v;
    }

private:
    std::span<const uint8_t> b_;
    bool swapped_;
};

// Network byte order readers for the frame contents.
uint16_t be16(const uint8_t* p) { return uint16_t(p[0]) << 8 | p[1]; }

struct L4Info {
    IpAddr src, dst;
    uint16_t sport = 0, dport = 0;
    int64_t payload = 0;
    const char* proto = nullptr;
    bool ok = false;
};

L4Info parse_l4(const uint8_t* p, size_t len) {
    L4Info out;
    if (len < 14) return out;
    size_t off = 12;
    uint16_t ethertype = be16(p + off);
    off = 14;
    if (ethertype == 0x8100) {  // single VLAN tag
        if (len < 18) return out;
        ethertype = be16(p + 16);
        off = 18;
    }

    int ipproto = -1;
    size_t l4 = 0;
    int64_t l4_total = 0;  // transport header + payload
    if (ethertype == 0x0800) {
        if (len < off + 20) return out;
        const uint8_t* ip = p + off;
        if ((ip[0] >> 4) != 4) return out;
        size_t ihl = size_t(ip[0] & 0x0f) * 4;
        if (ihl < 20 || len < off + ihl) return out;
        uint16_t total_len = be16(ip + 2);
        if (total_len < ihl) return out;
        uint16_t frag = be16(ip + 6);
        if ((frag & 0x1fff) != 0) return out;  // non-first fragment: no L4 header
        ipproto = ip[9];
        out.src.family = out.dst.family = AF_INET;
        std::memcpy(out.src.bytes.data(), ip + 12, 4);
        std::memcpy(out.dst.bytes.data(), ip + 16, 4);
        l4 = off + ihl;
        l4_total = int64_t(total_len) - int64_t(ihl);
    } else if (ethertype == 0x86dd) {
        if (len < off + 40) return out;
        const uint8_t* ip = p + off;
        if ((ip[0] >> 4) != 6) return out;
        uint16_t payload_len = be16(ip + 4);
        int next = ip[6];
        out.src.family = out.dst.family = AF_INET6;
        std::memcpy(out.src.bytes.data(), ip + 8, 16);
        std::memcpy(out.dst.bytes.data(), ip + 24, 16);
        size_t pos = off + 40;
        int64_t ext_bytes = 0;
        // Walk common extension headers until TCP/UDP.
        while (next == 0 || next == 43 || next == 60 || next == 44) {
            if (len < pos + 8) return out;
            if (next == 44) {
                uint16_t fo = be16(p + pos + 2);
                if ((fo & 0xfff8) != 0) return out;  // non-first fragment
                next = p[pos];
                pos += 8;
                ext_bytes += 8;
            } else {
                size_t extlen = (size_t(p[pos + 1]) + 1) * 8;
                next = p[pos];
                if (len < pos + extlen) return out;
                pos += extlen;
                ext_bytes += int64_t(extlen);
            }
        }
        ipproto = next;
        l4 = pos;
        l4_total = int64_t(payload_len) - ext_bytes;
    } else {
        return out;
    }

    if (l4_total < 0) return out;
    if (ipproto == 6) {
        if (len < l4 + 20) return out;
        const uint8_t* tcp = p + l4;
        size_t doff = size_t(tcp[12] >> 4) * 4;
        if (doff < 20 || l4_total < int64_t(doff)) return out;
        out.sport = be16(tcp);
        out.dport = be16(tcp + 2);
        out.payload = l4_total - int64_t(doff);
        out.proto = "tcp";
        out.ok = true;
    } else if (ipproto == 17) {
        if (len < l4 + 8) return out;
        const uint8_t* udp = p + l4;
        uint16_t udp_len = be16(udp + 4);
        if (udp_len < 8) return out;
        out.sport = be16(udp);
        out.dport = be16(udp + 2);
        out.payload = int64_t(udp_len) - 8;
        out.proto = "udp";
        out.ok = true;
    }
    return out;
}

std::string flow_key(const L4Info& l4) {
    std::string a = ip_to_string(l4.src) + ":" + std::to_string(l4.sport);
    std::string b = ip_to_string(l4.dst) + ":" + std::to_string(l4.dport);
    if (b < a) std::swap(a, b);
    return std::string(l4.proto) + "|" + a + "|" + b;
}

}  // namespace

std::vector<PacketRecord> parse_pcap(std::span<const uint8_t> bytes, const IngestConfig& cfg) {
    cfg.validate();
    Resolved res;
    for (const auto& s : cfg.client_addrs) res.clients.push_back(parse_ip(s));
    for (const auto& s : cfg.provider_addrs) res.providers.push_back(parse_prefix(s));

    if (bytes.size() < 24) fail(TP_E_PARSE, "MalformedHeader: truncated pcap global header");
    uint32_t magic_raw;
    std::memcpy(&magic_raw, bytes.data(), 4);
    bool swapped;
    if (magic_raw == 0xa1b2c3d4u)
        swapped = false;
    else if (magic_raw == 0xd4c3b2a1u)
        swapped = true;
    else
        fail(TP_E_PARSE, "MalformedHeader: bad pcap magic");
    Reader r(bytes, swapped);
    uint32_t linktype = r.u32(20);
    if (linktype != 1)
        fail(TP_E_PARSE, "UnsupportedLinkType: expected Ethernet (1), got " +
                             std::to_string(linktype));

    std::vector<PacketRecord> out;
    size_t pos = 24;
    while (pos < bytes.size()) {
        if (r.remaining(pos) < 16)
            fail(TP_E_PARSE, "TruncatedPacket: incomplete record header at offset " +
                                 std::to_string(pos));
        uint32_t ts_sec = r.u32(pos);
        uint32_t ts_usec = r.u32(pos + 4);
        uint32_t incl_len = r.u32(pos + 8);
        pos += 16;
        if (r.remaining(pos) < incl_len)
            fail(TP_E_PARSE, "TruncatedPacket: record body exceeds file at offset " +
                                 std::to_string(pos));
        const uint8_t* frame = bytes.data() + pos;
        pos += incl_len;

        L4Info l4 = parse_l4(frame, incl_len);
        if (!l4.ok) continue;
        if (l4.payload < cfg.min_payload) continue;

        int d;
        if (res.is_client(l4.src))
            d = 1;
        else if (res.is_client(l4.dst))
            d = -1;
        else
            continue;

        PacketRecord rec;
        rec.t = double(ts_sec) + double(ts_usec) * 1e-6;
        rec.d = d;
        rec.s = l4.payload;
        rec.src_flow = flow_key(l4);
        rec.provider_flow = res.is_provider(l4.src) || res.is_provider(l4.dst);
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace tp
