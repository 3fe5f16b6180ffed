#pragma once
#include <filesystem>
#include <string>
#include <vector>

#include "fluencebench/field.hpp"

namespace fluencebench {

// Gantry geometry shared by every beam of a plan.
struct BeamConfig {
    int beam_count = 9;
    std::vector<double> gantry_angles_deg; // evenly spaced over 360 by default
    int fluence_h = 0;
    int fluence_w = 0;
    double attenuation_mu = 0.02; // per mm

    static BeamConfig evenly_spaced(int beam_count, int fluence_h, int fluence_w,
                                    double attenuation_mu = 0.02);
};

// Per-beam 2D non-negative fluence maps, MU-like arbitrary units.
struct FluenceSet {
    int beam_count = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values; // beam-major, then row-major

    int64_t beam_stride() const { return static_cast<int64_t>(height) * width; }
    const float* beam_ptr(int b) const { return values.data() + b * beam_stride(); }
    float* beam_ptr(int b) { return values.data() + b * beam_stride(); }
    Map2D beam(int b) const;
};

FluenceSet make_fluence(int beam_count, int height, int width, float fill = 0.0f);

// FluenceSet <-> FARR1 field of shape [B,1,Hf,Wf].
Field fluence_to_field(const FluenceSet& fs);
FluenceSet fluence_from_field(const Field& f);

struct CaseRecord {
    std::string case_id;
    Field ct;     // 1 channel, HU-like
    Field masks;  // K binary channels
    Field dose;   // 1 channel, >= 0
    FluenceSet fluence;
    BeamConfig beams;
};

// Throws ConfigError on any invariant violation (shape/spacing agreement,
// non-binary masks, negative dose, beam count mismatch).
void validate_case(const CaseRecord& rec);

// On-disk case = one directory with ct.farr, masks.farr, dose.farr,
// fluence.farr and beams.json.
void write_case(const CaseRecord& rec, const std::filesystem::path& dir);
CaseRecord read_case(const std::filesystem::path& dir, const std::string& case_id);

} // namespace fluencebench
