#include "fluencebench/field.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fluencebench/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "FARR1 I/O assumes a little-endian host");
static_assert(sizeof(float) == 4, "FARR1 payload is 32-bit IEEE-754");

namespace fluencebench {

void validate_field(const Field& f, const std::string& context) {
    if (f.channels < 1 || f.depth < 1 || f.height < 1 || f.width < 1)
        throw ConfigError(context + ": non-positive field shape");
    for (double s : f.spacing_mm)
        if (!(s > 0.0) || !std::isfinite(s))
            throw ConfigError(context + ": spacing_mm components must be positive");
    if (static_cast<int64_t>(f.values.size()) != f.numel())
        throw ConfigError(context + ": payload length mismatch");
    for (float v : f.values)
        if (!std::isfinite(v))
            throw ConfigError(context + ": non-finite values");
}

Field make_field(int channels, int depth, int height, int width,
                 std::array<double, 3> spacing_mm, float fill) {
    Field f;
    f.channels = channels;
    f.depth = depth;
    f.height = height;
    f.width = width;
    f.spacing_mm = spacing_mm;
    f.values.assign(static_cast<size_t>(f.numel()), fill);
    validate_field(f, "make_field");
    return f;
}

Field extract_channel(const Field& f, int channel) {
    if (channel < 0 || channel >= f.channels)
        throw ConfigError("extract_channel: channel out of range");
    Field out = make_field(1, f.depth, f.height, f.width, f.spacing_mm);
    const int64_t n = static_cast<int64_t>(f.depth) * f.slice_stride();
    std::memcpy(out.values.data(), f.values.data() + channel * n, n * sizeof(float));
    return out;
}

Map2D make_map(int height, int width, float fill) {
    Map2D m;
    m.height = height;
    m.width = width;
    m.values.assign(static_cast<size_t>(height) * width, fill);
    return m;
}

namespace {
constexpr char kMagic[] = "FARR1\n";
} // namespace

Field read_field(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("read_field: cannot open " + path.string());

    char magic[6];
    in.read(magic, 6);
    if (in.gcount() != 6 || std::memcmp(magic, kMagic, 6) != 0)
        throw ConfigError("read_field: bad magic in " + path.string());

    std::string header_line;
    if (!std::getline(in, header_line))
        throw ConfigError("read_field: missing header in " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("read_field: malformed header in " + path.string() + ": " + e.what());
    }

    Field f;
    try {
        if (header.at("dtype").get<std::string>() != "f32")
            throw ConfigError("read_field: unsupported dtype in " + path.string());
        const auto shape = header.at("shape").get<std::vector<int64_t>>();
        const auto spacing = header.at("spacing_mm").get<std::vector<double>>();
        if (shape.size() != 4 || spacing.size() != 3)
            throw ConfigError("read_field: malformed header in " + path.string());
        f.channels = static_cast<int>(shape[0]);
        f.depth = static_cast<int>(shape[1]);
        f.height = static_cast<int>(shape[2]);
        f.width = static_cast<int>(shape[3]);
        f.spacing_mm = {spacing[0], spacing[1], spacing[2]};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("read_field: malformed header in " + path.string() + ": " + e.what());
    }
    if (f.channels < 1 || f.depth < 1 || f.height < 1 || f.width < 1)
        throw ConfigError("read_field: non-positive shape in " + path.string());

    const int64_t n = f.numel();
    f.values.resize(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(f.values.data()), n * static_cast<int64_t>(sizeof(float)));
    if (in.gcount() != n * static_cast<int64_t>(sizeof(float)))
        throw ConfigError("read_field: payload length mismatch in " + path.string());
    char extra;
    if (in.read(&extra, 1))
        throw ConfigError("read_field: payload length mismatch in " + path.string());

    validate_field(f, "read_field: " + path.string());
    return f;
}

void write_field(const Field& f, const std::filesystem::path& path) {
    validate_field(f, "write_field");
    nlohmann::json header;
    header["shape"] = {f.channels, f.depth, f.height, f.width};
    header["dtype"] = "f32";
    header["spacing_mm"] = {f.spacing_mm[0], f.spacing_mm[1], f.spacing_mm[2]};

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ConfigError("write_field: cannot open " + path.string());
    out.write(kMagic, 6);
    const std::string line = header.dump();
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    out.write(reinterpret_cast<const char*>(f.values.data()),
              f.numel() * static_cast<int64_t>(sizeof(float)));
    if (!out)
        throw ConfigError("write_field: I/O failure writing " + path.string());
}

Field resample_inplane(const Field& f, int new_h, int new_w) {
    validate_field(f, "resample_inplane");
    if (f.height < 2 || f.width < 2)
        throw ConfigError("resample_inplane: degenerate input (height or width < 2)");
    if (new_h < 2 || new_w < 2)
        throw ConfigError("resample_inplane: target size must be >= 2");

    Field out = make_field(f.channels, f.depth, new_h, new_w, f.spacing_mm);
    out.spacing_mm[1] = f.spacing_mm[1] * static_cast<double>(f.height - 1) / (new_h - 1);
    out.spacing_mm[2] = f.spacing_mm[2] * static_cast<double>(f.width - 1) / (new_w - 1);

    const double sy = static_cast<double>(f.height - 1) / (new_h - 1);
    const double sx = static_cast<double>(f.width - 1) / (new_w - 1);

    for (int c = 0; c < f.channels; ++c) {
        for (int d = 0; d < f.depth; ++d) {
            const float* src = f.slice_ptr(c, d);
            float* dst = out.slice_ptr(c, d);
            for (int h = 0; h < new_h; ++h) {
                const double y = h * sy;
                const int y0 = std::min(static_cast<int>(y), f.height - 2);
                const double fy = y - y0;
                for (int w = 0; w < new_w; ++w) {
                    const double x = w * sx;
                    const int x0 = std::min(static_cast<int>(x), f.width - 2);
                    const double fx = x - x0;
                    const double v00 = src[static_cast<int64_t>(y0) * f.width + x0];
                    const double v01 = src[static_cast<int64_t>(y0) * f.width + x0 + 1];
                    const double v10 = src[static_cast<int64_t>(y0 + 1) * f.width + x0];
                    const double v11 = src[static_cast<int64_t>(y0 + 1) * f.width + x0 + 1];
                    dst[static_cast<int64_t>(h) * new_w + w] = static_cast<float>(
                        v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx +
                        v10 * fy * (1 - fx) + v11 * fy * fx);
                }
            }
        }
    }
    return out;
}

Field normalize_ct(const Field& f, float window_lo, float window_hi) {
    validate_field(f, "normalize_ct");
    if (!(window_lo < window_hi))
        throw ConfigError("normalize_ct: window_lo must be < window_hi");
    Field out = f;
    const float range = window_hi - window_lo;
    for (float& v : out.values) {
        float t = (v - window_lo) / range;
        v = t < 0.0f ? 0.0f : (t > 1.0f ? 1.0f : t);
    }
    return out;
}

} // namespace fluencebench
