#pragma once
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fluencebench {

// N-channel 3D scalar grid with physical spacing. Values are stored
// channel-major, then slice, then row-major:
//   index = ((c*depth + d)*height + h)*width + w
// The in-memory order coincides with the FARR1 payload order.
struct Field {
    int channels = 0;
    int depth = 0;
    int height = 0;
    int width = 0;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0}; // slice, row, column
    std::vector<float> values;

    int64_t numel() const {
        return static_cast<int64_t>(channels) * depth * height * width;
    }
    int64_t slice_stride() const { return static_cast<int64_t>(height) * width; }

    float at(int c, int d, int h, int w) const {
        return values[((static_cast<int64_t>(c) * depth + d) * height + h) * width + w];
    }
    float& at(int c, int d, int h, int w) {
        return values[((static_cast<int64_t>(c) * depth + d) * height + h) * width + w];
    }
    const float* slice_ptr(int c, int d) const {
        return values.data() + (static_cast<int64_t>(c) * depth + d) * slice_stride();
    }
    float* slice_ptr(int c, int d) {
        return values.data() + (static_cast<int64_t>(c) * depth + d) * slice_stride();
    }

    bool same_grid(const Field& o) const {
        return channels == o.channels && depth == o.depth && height == o.height &&
               width == o.width && spacing_mm == o.spacing_mm;
    }
};

// Throws ConfigError if shape/spacing/value invariants are violated.
void validate_field(const Field& f, const std::string& context);

Field make_field(int channels, int depth, int height, int width,
                 std::array<double, 3> spacing_mm, float fill = 0.0f);

Field extract_channel(const Field& f, int channel);

// Plain 2D map, row-major. Fluence maps and beam's-eye-view projections.
struct Map2D {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    float at(int h, int w) const { return values[static_cast<int64_t>(h) * width + w]; }
    float& at(int h, int w) { return values[static_cast<int64_t>(h) * width + w]; }
};

Map2D make_map(int height, int width, float fill = 0.0f);

// FARR1 container: "FARR1\n", one JSON header line, then little-endian f32
// payload in the layout above. Round trips are byte exact.
Field read_field(const std::filesystem::path& path);
void write_field(const Field& f, const std::filesystem::path& path);

// Bilinear in-plane resampling with the align-corners convention: corner
// voxel centers map onto corner voxel centers, so resampling to the same
// shape is the identity. Spacing is rescaled to preserve physical extent.
Field resample_inplane(const Field& f, int new_h, int new_w);

// clamp((v - lo) / (hi - lo), 0, 1)
Field normalize_ct(const Field& f, float window_lo, float window_hi);

} // namespace fluencebench
