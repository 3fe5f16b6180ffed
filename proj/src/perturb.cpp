#include "fluencebench/perturb.hpp"

#include <algorithm>
#include <cmath>

#include "fluencebench/errors.hpp"
#include "fluencebench/hashrand.hpp"

namespace fluencebench {

std::string kind_name(PerturbationKind k) {
    switch (k) {
        case PerturbationKind::None: return "none";
        case PerturbationKind::Geometric: return "geometric";
        case PerturbationKind::Noise: return "noise";
        case PerturbationKind::Bias: return "bias";
        case PerturbationKind::DataFraction: return "data_fraction";
    }
    return "none";
}

PerturbationKind kind_from_name(const std::string& name) {
    if (name == "none") return PerturbationKind::None;
    if (name == "geometric") return PerturbationKind::Geometric;
    if (name == "noise") return PerturbationKind::Noise;
    if (name == "bias") return PerturbationKind::Bias;
    if (name == "data_fraction") return PerturbationKind::DataFraction;
    throw ConfigError("unknown perturbation kind: " + name);
}

void PerturbationSpec::validate() const {
    switch (kind) {
        case PerturbationKind::None:
            break;
        case PerturbationKind::Geometric:
            if (std::abs(theta_deg) > 45.0)
                throw ConfigError("PerturbationSpec: |theta_deg| must be <= 45");
            break;
        case PerturbationKind::Noise:
            if (!(sigma >= 0.0))
                throw ConfigError("PerturbationSpec: sigma must be >= 0");
            break;
        case PerturbationKind::Bias:
            if (!(bias_strength >= 0.0 && bias_strength <= 0.5))
                throw ConfigError("PerturbationSpec: bias_strength must lie in [0, 0.5]");
            break;
        case PerturbationKind::DataFraction:
            if (!(alpha > 0.0 && alpha <= 1.0))
                throw ConfigError("PerturbationSpec: alpha must lie in (0, 1]");
            break;
    }
}

nlohmann::json PerturbationSpec::to_json() const {
    nlohmann::json j;
    j["kind"] = kind_name(kind);
    j["theta_deg"] = theta_deg;
    j["shift_mm"] = {shift_mm[0], shift_mm[1]};
    j["sigma"] = sigma;
    j["bias_strength"] = bias_strength;
    j["bias_offset"] = bias_offset;
    j["alpha"] = alpha;
    j["seed"] = seed;
    return j;
}

PerturbationSpec PerturbationSpec::from_json(const nlohmann::json& j) {
    PerturbationSpec s;
    try {
        s.kind = kind_from_name(j.at("kind").get<std::string>());
        s.theta_deg = j.value("theta_deg", 0.0);
        if (j.contains("shift_mm")) {
            const auto v = j.at("shift_mm").get<std::vector<double>>();
            if (v.size() != 2)
                throw ConfigError("PerturbationSpec: shift_mm must have 2 entries");
            s.shift_mm = {v[0], v[1]};
        }
        s.sigma = j.value("sigma", 0.0);
        s.bias_strength = j.value("bias_strength", 0.0);
        s.bias_offset = j.value("bias_offset", 0.0);
        s.alpha = j.value("alpha", 1.0);
        s.seed = j.value("seed", static_cast<uint64_t>(0));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("PerturbationSpec: malformed JSON: ") + e.what());
    }
    s.validate();
    return s;
}

const std::vector<BiasPreset>& bias_presets() {
    static const std::vector<BiasPreset> presets = {
        {"mild", 0.1, 0.02},
        {"severe", 0.3, 0.05},
    };
    return presets;
}

Field rigid_transform(const Field& f, double theta_deg, std::array<double, 2> shift_mm,
                      float fill, bool rebinarize_masks) {
    validate_field(f, "rigid_transform");
    if (std::abs(theta_deg) > 45.0)
        throw ConfigError("rigid_transform: |theta_deg| must be <= 45");

    const double theta = theta_deg * 3.14159265358979323846 / 180.0;
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    const double sr = f.spacing_mm[1]; // row spacing
    const double sc = f.spacing_mm[2]; // column spacing
    const double cy = (f.height - 1) / 2.0;
    const double cx = (f.width - 1) / 2.0;

    Field out = make_field(f.channels, f.depth, f.height, f.width, f.spacing_mm, fill);

    for (int c = 0; c < f.channels; ++c) {
        for (int d = 0; d < f.depth; ++d) {
            const float* src = f.slice_ptr(c, d);
            float* dst = out.slice_ptr(c, d);
            for (int h = 0; h < f.height; ++h) {
                const double y = (h - cy) * sr; // mm about slice center
                for (int w = 0; w < f.width; ++w) {
                    const double x = (w - cx) * sc;
                    // source position R*r + t, in mm
                    const double xs = ct * x - st * y + shift_mm[1];
                    const double ys = st * x + ct * y + shift_mm[0];
                    const double px = xs / sc + cx;
                    const double py = ys / sr + cy;
                    float v = fill;
                    if (px >= 0.0 && px <= f.width - 1 && py >= 0.0 && py <= f.height - 1) {
                        const int x0 = std::min(static_cast<int>(px), f.width - 2 >= 0 ? f.width - 2 : 0);
                        const int y0 = std::min(static_cast<int>(py), f.height - 2 >= 0 ? f.height - 2 : 0);
                        const double fx = px - x0;
                        const double fy = py - y0;
                        const int x1 = std::min(x0 + 1, f.width - 1);
                        const int y1 = std::min(y0 + 1, f.height - 1);
                        const double v00 = src[static_cast<int64_t>(y0) * f.width + x0];
                        const double v01 = src[static_cast<int64_t>(y0) * f.width + x1];
                        const double v10 = src[static_cast<int64_t>(y1) * f.width + x0];
                        const double v11 = src[static_cast<int64_t>(y1) * f.width + x1];
                        v = static_cast<float>(v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx +
                                               v10 * fy * (1 - fx) + v11 * fy * fx);
                    }
                    dst[static_cast<int64_t>(h) * f.width + w] = v;
                }
            }
        }
    }

    if (rebinarize_masks)
        for (float& v : out.values)
            v = v >= 0.5f ? 1.0f : 0.0f;
    return out;
}

Field gaussian_noise(const Field& f, double sigma, uint64_t seed) {
    validate_field(f, "gaussian_noise");
    if (!(sigma >= 0.0))
        throw ConfigError("gaussian_noise: sigma must be >= 0");
    if (sigma == 0.0)
        return f;
    Field out = f;
    const int64_t n = f.numel();
    for (int64_t i = 0; i < n; ++i)
        out.values[i] = static_cast<float>(out.values[i] + sigma * normal01(seed, static_cast<uint64_t>(i)));
    return out;
}

Field bias_field(const Field& f, double strength, double offset, uint64_t seed) {
    validate_field(f, "bias_field");
    if (!(strength >= 0.0 && strength <= 0.5))
        throw ConfigError("bias_field: strength must lie in [0, 0.5]");

    // Legendre P0..P2 on [-1,1].
    const auto p0 = [](double) { return 1.0; };
    const auto p1 = [](double t) { return t; };
    const auto p2 = [](double t) { return 0.5 * (3.0 * t * t - 1.0); };

    // Coefficients for (i,j) with i+j <= 2, (i,j) != (0,0):
    // (1,0), (0,1), (2,0), (1,1), (0,2)
    double coef[5];
    for (int k = 0; k < 5; ++k)
        coef[k] = uniform_pm1(seed, static_cast<uint64_t>(k));

    const int hh = f.height, ww = f.width;
    std::vector<double> expansion(static_cast<size_t>(hh) * ww);
    double max_abs = 0.0;
    for (int h = 0; h < hh; ++h) {
        const double yt = hh > 1 ? 2.0 * h / (hh - 1) - 1.0 : 0.0;
        for (int w = 0; w < ww; ++w) {
            const double xt = ww > 1 ? 2.0 * w / (ww - 1) - 1.0 : 0.0;
            const double s = coef[0] * p1(xt) * p0(yt) + coef[1] * p0(xt) * p1(yt) +
                             coef[2] * p2(xt) * p0(yt) + coef[3] * p1(xt) * p1(yt) +
                             coef[4] * p0(xt) * p2(yt);
            expansion[static_cast<size_t>(h) * ww + w] = s;
            max_abs = std::max(max_abs, std::abs(s));
        }
    }
    const double scale = max_abs > 1e-12 ? strength / max_abs : 0.0;

    Field out = f;
    for (int c = 0; c < f.channels; ++c)
        for (int d = 0; d < f.depth; ++d) {
            float* dst = out.slice_ptr(c, d);
            for (int64_t i = 0; i < f.slice_stride(); ++i) {
                const double b = 1.0 + scale * expansion[static_cast<size_t>(i)];
                dst[i] = static_cast<float>(b * dst[i] + offset);
            }
        }
    return out;
}

std::vector<std::string> subsample_cases(const std::vector<std::string>& case_ids,
                                         double alpha, uint64_t seed) {
    if (case_ids.empty())
        throw ConfigError("subsample_cases: empty id list");
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ConfigError("subsample_cases: alpha must lie in (0, 1]");
    std::vector<std::string> perm = case_ids;
    deterministic_shuffle(perm, seed);
    const size_t keep = static_cast<size_t>(std::ceil(alpha * static_cast<double>(perm.size())));
    perm.resize(std::min(keep, perm.size()));
    return perm;
}

} // namespace fluencebench
