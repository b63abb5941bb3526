#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

// Hand-constructed classic pcap captures for parser tests: global header,
// record headers, Ethernet/IPv4/IPv6/TCP/UDP frames, all laid out byte by
// byte so expectations can be verified against the format documents.
namespace tputil {

struct PcapPacket {
    double t = 0;               // absolute seconds
    std::string src, dst;       // IPv4 dotted quads (or IPv6 when v6 = true)
    uint16_t sport = 40000, dport = 443;
    bool udp = false;
    bool v6 = false;
    int payload = 100;          // transport payload bytes
};

class PcapBuilder {
public:
    explicit PcapBuilder(bool swapped = false, uint32_t linktype = 1)
        : swapped_(swapped) {
        u32(0xa1b2c3d4u);
        u16(2);  // version major
        u16(4);  // version minor
        u32(0);  // thiszone
        u32(0);  // sigfigs
        u32(65535);
        u32(linktype);
    }

    void add(const PcapPacket& p) {
        std::vector<uint8_t> frame = p.v6 ? frame6(p) : frame4(p);
        uint32_t sec = uint32_t(p.t);
        uint32_t usec = uint32_t((p.t - double(sec)) * 1e6 + 0.5);
        u32(sec);
        u32(usec);
        u32(uint32_t(frame.size()));  // incl_len
        u32(uint32_t(frame.size()));  // orig_len
        bytes.insert(bytes.end(), frame.begin(), frame.end());
    }

    void raw(const std::vector<uint8_t>& b) { bytes.insert(bytes.end(), b.begin(), b.end()); }

    std::vector<uint8_t> bytes;

private:
    bool swapped_;

    void u16(uint16_t v) {
        if (swapped_) {
            bytes.push_back(uint8_t(v >> 8));
            bytes.push_back(uint8_t(v));
        } else {
            bytes.push_back(uint8_t(v));
            bytes.push_back(uint8_t(v >> 8));
        }
    }
    void u32(uint32_t v) {
        if (swapped_) {
            bytes.push_back(uint8_t(v >> 24));
            bytes.push_back(uint8_t(v >> 16));
            bytes.push_back(uint8_t(v >> 8));
            bytes.push_back(uint8_t(v));
        } else {
            bytes.push_back(uint8_t(v));
            bytes.push_back(uint8_t(v >> 8));
            bytes.push_back(uint8_t(v >> 16));
            bytes.push_back(uint8_t(v >> 24));
        }
    }

    static void be16(std::vector<uint8_t>& f, uint16_t v) {
        f.push_back(uint8_t(v >> 8));
        f.push_back(uint8_t(v));
    }

    static void ipv4(std::vector<uint8_t>& f, const std::string& s) {
        unsigned a, b, c, d;
        std::sscanf(s.c_str(), "%u.%u.%u.%u", &a, &b, &c, &d);
        f.push_back(uint8_t(a));
        f.push_back(uint8_t(b));
        f.push_back(uint8_t(c));
        f.push_back(uint8_t(d));
    }

    static std::vector<uint8_t> frame4(const PcapPacket& p) {
        std::vector<uint8_t> f;
        for (int i = 0; i < 6; ++i) f.push_back(0x02);  // dst mac
        for (int i = 0; i < 6; ++i) f.push_back(0x04);  // src mac
        be16(f, 0x0800);
        int l4len = p.udp ? 8 : 20;
        uint16_t total = uint16_t(20 + l4len + p.payload);
        f.push_back(0x45);  // version 4, ihl 5
        f.push_back(0);
        be16(f, total);
        be16(f, 0x1234);  // id
        be16(f, 0x4000);  // don't fragment
        f.push_back(64);  // ttl
        f.push_back(p.udp ? 17 : 6);
        be16(f, 0);  // checksum (unchecked)
        ipv4(f, p.src);
        ipv4(f, p.dst);
        append_l4(f, p, l4len);
        return f;
    }

    static std::vector<uint8_t> frame6(const PcapPacket& p) {
        std::vector<uint8_t> f;
        for (int i = 0; i < 6; ++i) f.push_back(0x02);
        for (int i = 0; i < 6; ++i) f.push_back(0x04);
        be16(f, 0x86dd);
        int l4len = p.udp ? 8 : 20;
        f.push_back(0x60);  // version 6
        f.push_back(0);
        be16(f, 0);
        be16(f, uint16_t(l4len + p.payload));
        f.push_back(p.udp ? 17 : 6);
        f.push_back(64);  // hop limit
        auto addr6 = [&](const std::string& last) {
            // 2001:db8::<last byte>
            std::vector<uint8_t> a(16, 0);
            a[0] = 0x20;
            a[1] = 0x01;
            a[2] = 0x0d;
            a[3] = 0xb8;
            a[15] = uint8_t(std::stoi(last));
            f.insert(f.end(), a.begin(), a.end());
        };
        addr6(p.src);
        addr6(p.dst);
        append_l4(f, p, l4len);
        return f;
    }

    static void append_l4(std::vector<uint8_t>& f, const PcapPacket& p, int l4len) {
        be16(f, p.sport);
        be16(f, p.dport);
        if (p.udp) {
            be16(f, uint16_t(8 + p.payload));
            be16(f, 0);  // checksum
        } else {
            for (int i = 0; i < 8; ++i) f.push_back(0);  // seq + ack
            f.push_back(0x50);                            // data offset 5
            f.push_back(0x18);                            // PSH|ACK
            be16(f, 0xffff);                              // window
            be16(f, 0);                                   // checksum
            be16(f, 0);                                   // urgent
        }
        for (int i = 0; i < p.payload; ++i) f.push_back(uint8_t(i));
        (void)l4len;
    }
};

// Unique temp path; files are cleaned up by the OS tmp reaper.
inline std::string tmp_path(const std::string& name) {
    static int counter = 0;
    auto dir = std::filesystem::temp_directory_path() / "trafficprint_tests";
    std::filesystem::create_directories(dir);
    return (dir / (std::to_string(++counter) + "_" + name)).string();
}

}  // namespace tputil
