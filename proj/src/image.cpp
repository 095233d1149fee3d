#include "dass/image.hpp"

#include "dass/binary_io.hpp"
#include "dass/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace dass {

namespace io {

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace io

namespace {

uint8_t to_byte(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Parses a binary netpbm header; returns the offset of the pixel data.
size_t parse_netpbm(const std::vector<uint8_t>& bytes, const char* magic, int& w, int& h,
                    const std::filesystem::path& path) {
    if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1])
        throw DataError(path.string() + ": not a " + magic + " file");
    size_t pos = 2;
    int fields[3];
    for (int& f : fields) {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::string digits;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) digits.push_back(static_cast<char>(bytes[pos++]));
        if (digits.empty()) throw DataError(path.string() + ": malformed header");
        f = std::stoi(digits);
    }
    ++pos;  // single whitespace before the raster
    w = fields[0];
    h = fields[1];
    if (fields[2] != 255) throw DataError(path.string() + ": only 8-bit maxval supported");
    if (w <= 0 || h <= 0) throw DataError(path.string() + ": bad dimensions");
    return pos;
}

}  // namespace

Image quantize_8bit(const Image& rgb) {
    Image out = rgb;
    for (double& v : out.data) v = to_byte(v) / 255.0;
    return out;
}

void write_ppm(const Image& rgb, const std::filesystem::path& path) {
    if (rgb.channels != 3) throw Error("write_ppm: expected 3 channels");
    const std::string header =
        "P6\n" + std::to_string(rgb.width) + " " + std::to_string(rgb.height) + "\n255\n";
    std::vector<uint8_t> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + rgb.data.size());
    for (double v : rgb.data) bytes.push_back(to_byte(v));
    io::write_file(path, bytes);
}

Image read_ppm(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    int w = 0, h = 0;
    const size_t pos = parse_netpbm(bytes, "P6", w, h, path);
    if (bytes.size() < pos + static_cast<size_t>(w) * h * 3) throw DataError(path.string() + ": truncated");
    Image img(h, w, 3);
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[pos + i] / 255.0;
    return img;
}

void write_pgm(const LabelMap& labels, const std::filesystem::path& path) {
    const std::string header =
        "P5\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n255\n";
    std::vector<uint8_t> bytes(header.begin(), header.end());
    bytes.insert(bytes.end(), labels.labels.begin(), labels.labels.end());
    io::write_file(path, bytes);
}

LabelMap read_pgm(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    int w = 0, h = 0;
    const size_t pos = parse_netpbm(bytes, "P5", w, h, path);
    if (bytes.size() < pos + static_cast<size_t>(w) * h) throw DataError(path.string() + ": truncated");
    LabelMap out(h, w);
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), out.labels.size(), out.labels.begin());
    return out;
}

void write_dimg(const Image& img, const std::filesystem::path& path) {
    io::Writer w;
    w.magic("DIMG");
    w.u32(static_cast<uint32_t>(img.height));
    w.u32(static_cast<uint32_t>(img.width));
    w.u32(static_cast<uint32_t>(img.channels));
    for (double v : img.data) w.f32(static_cast<float>(v));
    io::write_file(path, w.buffer());
}

Image read_dimg(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    io::Reader r(bytes);
    r.expect_magic("DIMG");
    const int h = static_cast<int>(r.u32());
    const int w = static_cast<int>(r.u32());
    const int c = static_cast<int>(r.u32());
    Image img(h, w, c);
    for (double& v : img.data) v = r.f32();
    return img;
}

void write_flow(const Image& flow, const std::filesystem::path& path) {
    if (flow.channels != 2) throw Error("write_flow: expected 2 channels");
    io::Writer w;
    w.magic("FLOW");
    w.u32(static_cast<uint32_t>(flow.height));
    w.u32(static_cast<uint32_t>(flow.width));
    for (double v : flow.data) w.f32(static_cast<float>(v));
    io::write_file(path, w.buffer());
}

Image read_flow(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    io::Reader r(bytes);
    r.expect_magic("FLOW");
    const int h = static_cast<int>(r.u32());
    const int w = static_cast<int>(r.u32());
    Image flow(h, w, 2);
    for (double& v : flow.data) {
        v = r.f32();
        if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite flow");
    }
    return flow;
}

}  // namespace dass
