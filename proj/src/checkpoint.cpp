#include "checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace armor {

namespace {

struct file_closer {
    void operator()(FILE * f) const {
        if (f) std::fclose(f);
    }
};
using file_ptr = std::unique_ptr<FILE, file_closer>;

void put_u32(FILE * f, uint32_t v) {
    uint8_t b[4] = { (uint8_t) v, (uint8_t) (v >> 8), (uint8_t) (v >> 16), (uint8_t) (v >> 24) };
    if (std::fwrite(b, 1, 4, f) != 4) fail(errc::io, "checkpoint: write failed");
}

void put_u64(FILE * f, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = (uint8_t) (v >> (8 * i));
    if (std::fwrite(b, 1, 8, f) != 8) fail(errc::io, "checkpoint: write failed");
}

void put_f64(FILE * f, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(f, v);
}

uint32_t get_u32(FILE * f) {
    uint8_t b[4];
    if (std::fread(b, 1, 4, f) != 4) fail(errc::parse, "checkpoint: truncated file");
    return (uint32_t) b[0] | ((uint32_t) b[1] << 8) | ((uint32_t) b[2] << 16) | ((uint32_t) b[3] << 24);
}

uint64_t get_u64(FILE * f) {
    uint8_t b[8];
    if (std::fread(b, 1, 8, f) != 8) fail(errc::parse, "checkpoint: truncated file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= (uint64_t) b[i] << (8 * i);
    return v;
}

double get_f64(FILE * f) {
    uint64_t v = get_u64(f);
    double   d;
    std::memcpy(&d, &v, 8);
    return d;
}

}  // namespace

void save_checkpoint(const param_store & ps, const std::string & path) {
    file_ptr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail(errc::io, "checkpoint: cannot open for write: " + path);
    if (std::fwrite("ARMOR1", 1, 6, f.get()) != 6) fail(errc::io, "checkpoint: write failed");
    put_u32(f.get(), 1);                        // version
    put_u32(f.get(), (uint32_t) ps.w.size());   // param count
    for (const auto & kv : ps.w) {
        const std::string & name = kv.first;
        const tensor &      w    = kv.second;
        put_u32(f.get(), (uint32_t) name.size());
        if (std::fwrite(name.data(), 1, name.size(), f.get()) != name.size())
            fail(errc::io, "checkpoint: write failed");
        put_u64(f.get(), 2);  // rank (tensors here are always 2-d)
        put_u64(f.get(), (uint64_t) w.rows);
        put_u64(f.get(), (uint64_t) w.cols);
        for (double d : w.v) put_f64(f.get(), d);
    }
}

void load_checkpoint(param_store & ps, const std::string & path) {
    file_ptr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail(errc::io, "checkpoint: cannot open for read: " + path);
    char magic[6];
    if (std::fread(magic, 1, 6, f.get()) != 6 || std::memcmp(magic, "ARMOR1", 6) != 0)
        fail(errc::parse, "checkpoint: bad magic");
    uint32_t version = get_u32(f.get());
    if (version != 1) fail(errc::parse, "checkpoint: unsupported version");
    uint32_t count = get_u32(f.get());
    param_store fresh;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t    nlen = get_u32(f.get());
        std::string name(nlen, '\0');
        if (nlen > 0 && std::fread(name.data(), 1, nlen, f.get()) != nlen)
            fail(errc::parse, "checkpoint: truncated name");
        uint64_t rank = get_u64(f.get());
        if (rank != 2) fail(errc::parse, "checkpoint: unsupported rank for " + name);
        uint64_t rows = get_u64(f.get());
        uint64_t cols = get_u64(f.get());
        tensor & w = fresh.add(name, (int64_t) rows, (int64_t) cols);
        for (double & d : w.v) d = get_f64(f.get());
    }
    ps = std::move(fresh);
}

uint64_t file_checksum(const std::string & path) {
    file_ptr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail(errc::io, "checksum: cannot open: " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    uint8_t  buf[65536];
    size_t   n;
    while ((n = std::fread(buf, 1, sizeof(buf), f.get())) > 0) h = fnv1a64(buf, n, h);
    return h;
}

}  // namespace armor
