#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "../error.hpp"
#include "network.hpp"

namespace rsdf::nn {

// "RSDF", u32 version, u32 tensor count; per tensor: u16 name length, name, u8 rank,
// u32 dims, f32 data. All little endian.
inline constexpr char model_magic[4] = {'R', 'S', 'D', 'F'};
inline constexpr std::uint32_t model_version = 1;

namespace detail {

class byte_writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
    void put(std::uint32_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class byte_reader {
public:
    explicit byte_reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1, "u8")); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2, "u16")); }
    std::uint32_t u32() { return get(4, "u32"); }
    float f32() { return std::bit_cast<float>(get(4, "f32")); }
    std::string str(std::size_t n) {
        need(n, "name");
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            throw format_error(std::string("model file truncated while reading ") + what + " at byte " +
                               std::to_string(pos_));
    }
    std::uint32_t get(int n, const char* what) {
        need(static_cast<std::size_t>(n), what);
        std::uint32_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::vector<std::uint8_t> encode_model(const network<float>& net) {
    detail::byte_writer w;
    w.raw(model_magic, 4);
    w.u32(model_version);
    w.u32(static_cast<std::uint32_t>(param_count));
    for (std::size_t i = 0; i < param_count; ++i) {
        const auto& spec = architecture[i];
        w.u16(static_cast<std::uint16_t>(spec.name.size()));
        w.raw(spec.name.data(), spec.name.size());
        w.u8(spec.rank);
        for (std::uint8_t r = 0; r < spec.rank; ++r) w.u32(spec.dims[r]);
        for (float v : net.params[i]) w.f32(v);
    }
    return w.bytes();
}

/// Parses and validates the whole buffer before returning, so a failure never yields a partial model.
inline network<float> decode_model(const std::vector<std::uint8_t>& bytes) {
    detail::byte_reader r(bytes);
    if (r.str(4) != std::string(model_magic, 4)) throw format_error("bad magic: not an RSDF model file");
    const auto version = r.u32();
    if (version != model_version) throw format_error("unsupported model version " + std::to_string(version));
    const auto count = r.u32();
    if (count != param_count)
        throw format_error("model holds " + std::to_string(count) + " tensors, architecture needs " +
                           std::to_string(param_count));
    network<float> net;
    for (std::size_t i = 0; i < param_count; ++i) {
        const auto& spec = architecture[i];
        const std::string name = r.str(r.u16());
        if (name != spec.name)
            throw format_error("tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                               std::string(spec.name) + "'");
        const auto rank = r.u8();
        if (rank != spec.rank) throw format_error("tensor '" + name + "' has rank " + std::to_string(rank));
        for (std::uint8_t d = 0; d < rank; ++d) {
            const auto dim = r.u32();
            if (dim != spec.dims[d])
                throw format_error("tensor '" + name + "' dimension " + std::to_string(d) + " is " +
                                   std::to_string(dim) + ", expected " + std::to_string(spec.dims[d]));
        }
        for (auto& v : net.params[i]) v = r.f32();
    }
    if (!r.at_end()) throw format_error("trailing bytes after the last tensor");
    return net;
}

inline void save_model(const network<float>& net, const std::filesystem::path& path) {
    const auto bytes = encode_model(net);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw format_error("write failed for " + path.string());
}

inline network<float> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open model " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_model(bytes);
}

} // namespace rsdf::nn
