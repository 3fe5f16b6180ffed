#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fluencebench/case_record.hpp"

namespace fluencebench {

// Mask channel order used by generated cases.
enum MaskChannel : int { kMaskBody = 0, kMaskPtv = 1, kMaskOarLeft = 2, kMaskOarRight = 3 };
constexpr int kMaskChannels = 4;

// Synthetic IMRT case generator. An elliptical body with a z-taper holds a
// spherical target offset from the axis and two ellipsoidal organs-at-risk
// flanking it along the row axis. Ground-truth fluence per beam is the
// target's beam's-eye-view projection, attenuated where rays cross an OAR;
// dose is the attenuated back-projection of that fluence.
struct PhantomConfig {
    int depth = 16;
    int height = 32;
    int width = 32;
    // ~4 mm in-plane pixels: a 5 mm setup shift is ~1.3 pixels while a 5
    // degree rotation moves peripheral anatomy by 2-4 mm, matching the
    // pixel economics of clinical 128-grid planning CTs.
    std::array<double, 3> spacing_mm{4.0, 4.0, 4.0};

    int beam_count = 9;
    double attenuation_mu = 0.02; // per mm
    double fluence_unit = 0.1;    // fixed global MU-like scaling
    double oar_shield = 0.3;      // fluence factor where a ray crosses an OAR

    double body_semi_x_mm = 52.0;
    double body_semi_y_mm = 42.0;
    double body_jitter_mm = 1.5;
    double body_taper = 0.30;

    // Anatomy varies in size and shape but stays centered on the
    // isocenter: positional variety would teach the regressors to chase
    // translations, which real planning grids (where targets sit at the
    // isocenter by construction) do not exhibit. The OARs hug the target
    // so their shadows cut the aperture edge; rotations swing those
    // shadows across the sharpest part of the modulation.
    double ptv_radius_mm = 16.0;
    double ptv_radius_jitter_mm = 2.0;
    double ptv_offset_mm = 0.5; // max in-plane center offset
    double ptv_z_offset_mm = 4.0;

    double oar_gap_mm = 1.0;
    std::array<double, 3> oar_semi_mm{7.0, 14.0, 16.0}; // x, y, z
    double oar_jitter_mm = 1.0;

    double tissue_hu = 40.0;
    double ptv_delta_hu = 40.0;
    double oar_left_delta_hu = -160.0;
    double oar_right_delta_hu = 160.0;
    double air_hu = -1000.0;
    // Training-time CT texture: ~0.03 in window-normalized units, so the
    // sigma = 0.05..0.20 stress grid spans mild to far out-of-distribution.
    double texture_noise_hu = 12.0;
};

CaseRecord generate_case(uint64_t seed, const PhantomConfig& cfg, std::string case_id = "");

// Rotate each axial slice by -angle about its center (bilinear) and sum
// along rows. Output is (width x depth); input must be square in-plane.
Map2D bev_projection(const Field& vol, double angle_deg);

// Back-project per-beam fluence through the body with exponential depth
// attenuation exp(-mu * depth-from-entry). Dose is deposited only inside
// the body. fluence maps must be (width x depth) shaped.
Field dose_from_fluence(const Field& body, const FluenceSet& fluence, const BeamConfig& beams,
                        double mu);

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

struct PhantomDataset {
    std::vector<CaseRecord> cases; // ordered by case id
    DatasetSplit split;
};

PhantomDataset generate_dataset(uint64_t base_seed, int n_cases, const PhantomConfig& cfg,
                                double train_frac = 0.8, double val_frac = 0.1);

} // namespace fluencebench
