#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dass {

// Dense interleaved H x W x C image of doubles.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c = 0) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c = 0) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t pixels() const { return static_cast<size_t>(height) * width; }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

// Per-pixel integer labels (0 = unlabeled).
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> labels;

    LabelMap() = default;
    LabelMap(int h, int w) : height(h), width(w), labels(static_cast<size_t>(h) * w, 0) {}
    uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
};

// Round-trips an RGB image through 8-bit storage.
Image quantize_8bit(const Image& rgb);

// Binary P6, 8-bit. Values are clamped to [0,1] before quantization.
void write_ppm(const Image& rgb, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

// Binary P5, 8-bit.
void write_pgm(const LabelMap& labels, const std::filesystem::path& path);
LabelMap read_pgm(const std::filesystem::path& path);

// Raw little-endian f32 with a {"DIMG", H, W, C} header.
void write_dimg(const Image& img, const std::filesystem::path& path);
Image read_dimg(const std::filesystem::path& path);

// Two-channel displacement image (u, v interleaved per pixel) with a
// {"FLOW", H, W} header followed by H*W*2 little-endian f32.
void write_flow(const Image& flow, const std::filesystem::path& path);
Image read_flow(const std::filesystem::path& path);

}  // namespace dass

namespace dass {

// Boolean H x W map.
struct BinaryMap {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> values;

    BinaryMap() = default;
    BinaryMap(int h, int w) : height(h), width(w), values(static_cast<size_t>(h) * w, 0) {}
    uint8_t& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
    size_t count() const {
        size_t c = 0;
        for (uint8_t v : values) c += v != 0;
        return c;
    }
};

}  // namespace dass
