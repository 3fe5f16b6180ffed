#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fluencebench/field.hpp"

namespace fluencebench {

enum class PerturbationKind { None, Geometric, Noise, Bias, DataFraction };

std::string kind_name(PerturbationKind k);
PerturbationKind kind_from_name(const std::string& name);

// Tagged description of one deployment-time stress transform. Only the
// fields relevant to `kind` are read. Identical spec + identical input
// gives identical output.
struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::None;
    double theta_deg = 0.0;
    std::array<double, 2> shift_mm{0.0, 0.0}; // row, column
    double sigma = 0.0;
    double bias_strength = 0.0;
    double bias_offset = 0.0;
    double alpha = 1.0;
    uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static PerturbationSpec from_json(const nlohmann::json& j);
};

// Severity presets. Mild/severe bias follows the toolkit defaults
// (strength 0.1/0.3, offset 0.02/0.05).
struct BiasPreset {
    std::string name;
    double strength;
    double offset;
};
const std::vector<BiasPreset>& bias_presets();

// Per-slice rigid resampling: output at in-plane position r samples the
// input at R*r + t about the slice center, bilinear, `fill` outside the
// grid. Shift is given in mm (row, column); spacing converts to pixels.
// With rebinarize_masks, every channel is thresholded at 0.5 afterwards.
Field rigid_transform(const Field& f, double theta_deg, std::array<double, 2> shift_mm,
                      float fill, bool rebinarize_masks = false);

// out(r) = f(r) + eps(r), eps iid N(0, sigma^2) keyed by (seed, voxel index).
Field gaussian_noise(const Field& f, double sigma, uint64_t seed);

// out(r) = b(x,y) * f(r) + offset with b a smooth in-plane multiplicative
// field: 1 + strength * normalized degree<=2 Legendre expansion with
// seed-drawn coefficients. max |expansion| over the grid is rescaled to 1,
// so b stays within [1-strength, 1+strength] and positive for
// strength <= 0.5.
Field bias_field(const Field& f, double strength, double offset, uint64_t seed);

// First ceil(alpha*n) elements of a seed-determined permutation. Subsets
// are nested across alpha for a fixed seed.
std::vector<std::string> subsample_cases(const std::vector<std::string>& case_ids,
                                         double alpha, uint64_t seed);

} // namespace fluencebench
