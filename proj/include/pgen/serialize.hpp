#pragma once

// Little-endian binary IO, CRC32, and the PGCK checkpoint container.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pgen/error.hpp"
#include "pgen/tensor.hpp"

namespace pgen {

// ---------------------------------------------------------------------------
// CRC32 (IEEE 802.3, reflected, poly 0xEDB88320)
// ---------------------------------------------------------------------------

inline uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = seed ^ 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

// ---------------------------------------------------------------------------
// Byte buffers
// ---------------------------------------------------------------------------

class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v) {
        for (int i = 0; i < 2; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f32_array(const float* v, size_t n) {
        for (size_t i = 0; i < n; ++i) f32(v[i]);
    }
    void str(const std::string& s) {
        u32(uint32_t(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void raw(const uint8_t* p, size_t n) { buf_.insert(buf_.end(), p, p + n); }

    const std::vector<uint8_t>& bytes() const { return buf_; }
    size_t size() const { return buf_.size(); }

    void append_crc() { u32(crc32(buf_.data(), buf_.size())); }

    void write_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open for writing: " + path);
        out.write(reinterpret_cast<const char*>(buf_.data()), std::streamsize(buf_.size()));
        if (!out) throw FormatError("write failed: " + path);
    }

private:
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<uint8_t> bytes) : buf_(std::move(bytes)) {}

    static ByteReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw FormatError("cannot open: " + path);
        const auto size = in.tellg();
        in.seekg(0);
        std::vector<uint8_t> bytes(static_cast<size_t>(size));
        in.read(reinterpret_cast<char*>(bytes.data()), size);
        if (!in) throw FormatError("read failed: " + path);
        return ByteReader(std::move(bytes));
    }

    // Validates the trailing CRC32 over everything before it and excludes it
    // from the readable region.
    void check_crc(const std::string& what) {
        if (buf_.size() < 4) throw FormatError(what + ": truncated file");
        const uint32_t stored = uint32_t(buf_[buf_.size() - 4]) | uint32_t(buf_[buf_.size() - 3]) << 8 |
                                uint32_t(buf_[buf_.size() - 2]) << 16 | uint32_t(buf_[buf_.size() - 1]) << 24;
        const uint32_t computed = crc32(buf_.data(), buf_.size() - 4);
        if (stored != computed) throw FormatError(what + ": checksum mismatch");
        limit_ = buf_.size() - 4;
    }

    uint8_t u8() { return take(1)[0]; }
    uint16_t u16() {
        const uint8_t* p = take(2);
        return uint16_t(p[0]) | uint16_t(p[1]) << 8;
    }
    uint32_t u32() {
        const uint8_t* p = take(4);
        return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
    }
    uint64_t u64() {
        const uint8_t* p = take(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
        return v;
    }
    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void f32_array(float* out, size_t n) {
        const uint8_t* p = take(4 * n);
        for (size_t i = 0; i < n; ++i) {
            uint32_t bits = uint32_t(p[4 * i]) | uint32_t(p[4 * i + 1]) << 8 |
                            uint32_t(p[4 * i + 2]) << 16 | uint32_t(p[4 * i + 3]) << 24;
            std::memcpy(out + i, &bits, 4);
        }
    }
    std::string str() {
        const uint32_t n = u32();
        const uint8_t* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }

    size_t remaining() const { return limit_ - pos_; }

private:
    const uint8_t* take(size_t n) {
        if (pos_ + n > limit_) throw FormatError("truncated file (unexpected end of data)");
        const uint8_t* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::vector<uint8_t> buf_;
    size_t pos_ = 0;
    size_t limit_ = SIZE_MAX;
};

// ---------------------------------------------------------------------------
// Versioning: major in the high 16 bits, minor in the low 16.
// ---------------------------------------------------------------------------

constexpr uint32_t kFormatMajor = 1;
constexpr uint32_t kFormatMinor = 0;
constexpr uint32_t kFormatVersion = (kFormatMajor << 16) | kFormatMinor;

inline void check_version(uint32_t file_version, const std::string& what) {
    const uint32_t major = file_version >> 16;
    const uint32_t minor = file_version & 0xFFFFu;
    if (major != kFormatMajor)
        throw FormatError(what + ": incompatible major version " + std::to_string(major) + "." +
                          std::to_string(minor) + " (this build reads " + std::to_string(kFormatMajor) +
                          ".x)");
    if (minor > kFormatMinor)
        throw FormatError(what + ": file minor version " + std::to_string(major) + "." +
                          std::to_string(minor) + " is newer than this build (" +
                          std::to_string(kFormatMajor) + "." + std::to_string(kFormatMinor) + ")");
}

// ---------------------------------------------------------------------------
// Checkpoint container ("PGCK")
// ---------------------------------------------------------------------------

enum class Component : uint8_t { Codec = 0, Gpt = 1, Classifier = 2 };

inline const char* component_name(Component c) {
    switch (c) {
        case Component::Codec: return "codec";
        case Component::Gpt: return "gpt";
        case Component::Classifier: return "classifier";
    }
    return "?";
}

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    Component component = Component::Codec;
    std::string config_text;                  // flat dotted-key config
    std::vector<NamedTensor> tensors;         // model weights
    bool has_optimizer = false;
    std::vector<NamedTensor> opt_m, opt_v;    // Adam moments, aligned with tensors
    int64_t opt_step = 0;
    int64_t train_step = 0;
    std::array<uint64_t, 4> rng_state{};

    const NamedTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    ByteWriter w;
    w.raw(reinterpret_cast<const uint8_t*>("PGCK"), 4);
    w.u32(kFormatVersion);
    w.u8(uint8_t(ck.component));
    w.str(ck.config_text);
    w.u64(uint64_t(ck.train_step));
    for (uint64_t s : ck.rng_state) w.u64(s);
    auto write_table = [&](const std::vector<NamedTensor>& table) {
        w.u32(uint32_t(table.size()));
        for (const auto& t : table) {
            w.str(t.name);
            w.u32(uint32_t(t.shape.size()));
            for (int64_t d : t.shape) w.u64(uint64_t(d));
            w.u64(uint64_t(t.data.size()));
            w.f32_array(t.data.data(), t.data.size());
        }
    };
    write_table(ck.tensors);
    w.u8(ck.has_optimizer ? 1 : 0);
    if (ck.has_optimizer) {
        w.u64(uint64_t(ck.opt_step));
        write_table(ck.opt_m);
        write_table(ck.opt_v);
    }
    w.append_crc();
    w.write_file(path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    r.check_crc("checkpoint " + path);
    char magic[5] = {0};
    for (int i = 0; i < 4; ++i) magic[i] = char(r.u8());
    if (std::string(magic) != "PGCK") throw FormatError("checkpoint " + path + ": bad magic");
    check_version(r.u32(), "checkpoint " + path);
    Checkpoint ck;
    ck.component = Component(r.u8());
    ck.config_text = r.str();
    ck.train_step = int64_t(r.u64());
    for (auto& s : ck.rng_state) s = r.u64();
    auto read_table = [&](std::vector<NamedTensor>& table) {
        const uint32_t n = r.u32();
        table.resize(n);
        for (auto& t : table) {
            t.name = r.str();
            const uint32_t nd = r.u32();
            t.shape.resize(nd);
            for (auto& d : t.shape) d = int64_t(r.u64());
            const uint64_t count = r.u64();
            if (int64_t(count) != numel_of(t.shape))
                throw FormatError("checkpoint " + path + ": tensor " + t.name + " size mismatch");
            t.data.resize(count);
            r.f32_array(t.data.data(), count);
        }
    };
    read_table(ck.tensors);
    ck.has_optimizer = r.u8() != 0;
    if (ck.has_optimizer) {
        ck.opt_step = int64_t(r.u64());
        read_table(ck.opt_m);
        read_table(ck.opt_v);
    }
    return ck;
}

// FNV-1a over a string; used for config compatibility hashes.
inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[size_t(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

}  // namespace pgen
