#pragma once

#include "dass/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dass::io {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class Writer {
public:
    void bytes(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void magic(std::string_view m) { bytes(m.data(), m.size()); }
    void u8(uint8_t v) { buf_.push_back(v); }
    void u32(uint32_t v) { bytes(&v, 4); }
    void i64(int64_t v) { bytes(&v, 8); }
    void f32(float v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }
    const std::vector<uint8_t>& buffer() const { return buf_; }
    std::vector<uint8_t> take() { return std::move(buf_); }

private:
    std::vector<uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const uint8_t> data) : data_(data) {}

    void bytes(void* p, size_t n) {
        if (pos_ + n > data_.size()) throw DataError("truncated binary data");
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    void expect_magic(std::string_view m) {
        std::string got(m.size(), '\0');
        bytes(got.data(), got.size());
        if (got != m) throw DataError("bad magic, expected " + std::string(m));
    }
    std::string tag(size_t n) {
        std::string got(n, '\0');
        bytes(got.data(), n);
        return got;
    }
    uint8_t u8() { uint8_t v; bytes(&v, 1); return v; }
    uint32_t u32() { uint32_t v; bytes(&v, 4); return v; }
    int64_t i64() { int64_t v; bytes(&v, 8); return v; }
    float f32() { float v; bytes(&v, 4); return v; }
    double f64() { double v; bytes(&v, 8); return v; }
    bool done() const { return pos_ == data_.size(); }
    size_t remaining() const { return data_.size() - pos_; }

private:
    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

}  // namespace dass::io

#include <filesystem>

namespace dass::io {

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const uint8_t> data);

}  // namespace dass::io
