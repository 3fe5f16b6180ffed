#include "fluencebench/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fluencebench/errors.hpp"
#include "fluencebench/hashrand.hpp"

namespace fluencebench {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Pull-back rotation about the map center in physical coordinates:
// out(r) = in(R(theta) * r), bilinear, `fill` outside.
Map2D rotate_map(const Map2D& src, double theta_deg, double row_mm, double col_mm, float fill) {
    if (theta_deg == 0.0)
        return src;
    const double theta = theta_deg * kPi / 180.0;
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    const double cy = (src.height - 1) / 2.0;
    const double cx = (src.width - 1) / 2.0;
    Map2D out = make_map(src.height, src.width, fill);
    for (int h = 0; h < src.height; ++h) {
        const double y = (h - cy) * row_mm;
        for (int w = 0; w < src.width; ++w) {
            const double x = (w - cx) * col_mm;
            const double xs = ct * x - st * y;
            const double ys = st * x + ct * y;
            const double px = xs / col_mm + cx;
            const double py = ys / row_mm + cy;
            if (px < 0.0 || px > src.width - 1 || py < 0.0 || py > src.height - 1)
                continue;
            const int x0 = std::min(static_cast<int>(px), src.width - 2);
            const int y0 = std::min(static_cast<int>(py), src.height - 2);
            const double fx = px - x0;
            const double fy = py - y0;
            out.at(h, w) = static_cast<float>(
                src.at(y0, x0) * (1 - fy) * (1 - fx) + src.at(y0, x0 + 1) * (1 - fy) * fx +
                src.at(y0 + 1, x0) * fy * (1 - fx) + src.at(y0 + 1, x0 + 1) * fy * fx);
        }
    }
    return out;
}

Map2D slice_as_map(const Field& f, int channel, int d) {
    Map2D m = make_map(f.height, f.width);
    const float* src = f.slice_ptr(channel, d);
    std::copy_n(src, f.slice_stride(), m.values.data());
    return m;
}

} // namespace

Map2D bev_projection(const Field& vol, double angle_deg) {
    validate_field(vol, "bev_projection");
    if (vol.channels != 1)
        throw ConfigError("bev_projection: expected a single-channel volume");
    if (vol.height != vol.width)
        throw ConfigError("bev_projection: in-plane grid must be square");

    Map2D out = make_map(vol.width, vol.depth);
    for (int d = 0; d < vol.depth; ++d) {
        const Map2D rotated =
            rotate_map(slice_as_map(vol, 0, d), -angle_deg, vol.spacing_mm[1], vol.spacing_mm[2], 0.0f);
        for (int w = 0; w < vol.width; ++w) {
            double acc = 0.0;
            for (int h = 0; h < vol.height; ++h)
                acc += rotated.at(h, w);
            out.at(w, d) = static_cast<float>(acc);
        }
    }
    return out;
}

Field dose_from_fluence(const Field& body, const FluenceSet& fluence, const BeamConfig& beams,
                        double mu) {
    validate_field(body, "dose_from_fluence");
    if (body.channels != 1)
        throw ConfigError("dose_from_fluence: body must be a single-channel mask");
    if (body.height != body.width)
        throw ConfigError("dose_from_fluence: in-plane grid must be square");
    if (fluence.beam_count != beams.beam_count)
        throw ConfigError("dose_from_fluence: fluence/beam count mismatch");
    if (fluence.height != body.width || fluence.width != body.depth)
        throw ConfigError("dose_from_fluence: fluence maps must be (width x depth)");

    const double row_mm = body.spacing_mm[1];
    const double col_mm = body.spacing_mm[2];
    Field dose = make_field(1, body.depth, body.height, body.width, body.spacing_mm);

    for (int b = 0; b < beams.beam_count; ++b) {
        const double angle = beams.gantry_angles_deg[b];
        for (int d = 0; d < body.depth; ++d) {
            Map2D body_rot =
                rotate_map(slice_as_map(body, 0, d), -angle, row_mm, col_mm, 0.0f);
            for (float& v : body_rot.values)
                v = v >= 0.5f ? 1.0f : 0.0f;

            Map2D deposit = make_map(body.height, body.width);
            for (int w = 0; w < body.width; ++w) {
                const float flu = fluence.beam_ptr(b)[static_cast<int64_t>(w) * fluence.width + d];
                if (flu <= 0.0f)
                    continue;
                int entry = -1;
                for (int h = 0; h < body.height; ++h) {
                    if (body_rot.at(h, w) == 0.0f)
                        continue;
                    if (entry < 0)
                        entry = h;
                    const double depth_mm = (h - entry) * row_mm;
                    deposit.at(h, w) = static_cast<float>(flu * std::exp(-mu * depth_mm));
                }
            }
            const Map2D back = rotate_map(deposit, angle, row_mm, col_mm, 0.0f);
            float* dst = dose.slice_ptr(0, d);
            for (int64_t i = 0; i < dose.slice_stride(); ++i)
                dst[i] += back.values[static_cast<size_t>(i)];
        }
    }

    // No deposition in air.
    for (int64_t i = 0; i < dose.numel(); ++i)
        if (body.values[static_cast<size_t>(i)] == 0.0f)
            dose.values[static_cast<size_t>(i)] = 0.0f;
    return dose;
}

CaseRecord generate_case(uint64_t seed, const PhantomConfig& cfg, std::string case_id) {
    if (cfg.depth < 2 || cfg.height < 8 || cfg.width < 8)
        throw ConfigError("generate_case: grid too small");
    if (cfg.height != cfg.width)
        throw ConfigError("generate_case: in-plane grid must be square");

    CaseRecord rec;
    if (case_id.empty()) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "case_%016llx", static_cast<unsigned long long>(seed));
        case_id = buf;
    }
    rec.case_id = std::move(case_id);

    const uint64_t geo = substream(seed, "geometry");
    const double body_ax = cfg.body_semi_x_mm + cfg.body_jitter_mm * uniform_pm1(geo, 0);
    const double body_ay = cfg.body_semi_y_mm + cfg.body_jitter_mm * uniform_pm1(geo, 1);
    const double ptv_r = cfg.ptv_radius_mm + cfg.ptv_radius_jitter_mm * uniform_pm1(geo, 2);
    const double ptv_cx = cfg.ptv_offset_mm * uniform_pm1(geo, 3);
    const double ptv_cy = cfg.ptv_offset_mm * uniform_pm1(geo, 4);
    const double ptv_cz = cfg.ptv_z_offset_mm * uniform_pm1(geo, 5);
    std::array<double, 3> oar_l, oar_r;
    for (int k = 0; k < 3; ++k) {
        oar_l[k] = cfg.oar_semi_mm[k] + cfg.oar_jitter_mm * uniform_pm1(geo, 6 + k);
        oar_r[k] = cfg.oar_semi_mm[k] + cfg.oar_jitter_mm * uniform_pm1(geo, 9 + k);
    }
    const double oar_l_cx = ptv_cx - (ptv_r + cfg.oar_gap_mm + oar_l[0]);
    const double oar_r_cx = ptv_cx + (ptv_r + cfg.oar_gap_mm + oar_r[0]);

    const double sz = cfg.spacing_mm[0], sy = cfg.spacing_mm[1], sx = cfg.spacing_mm[2];
    const double cy = (cfg.height - 1) / 2.0, cx = (cfg.width - 1) / 2.0,
                 cz = (cfg.depth - 1) / 2.0;
    if (body_ax >= cx * sx || body_ay >= cy * sy)
        throw ConfigError("generate_case: body does not fit in the grid");

    rec.masks = make_field(kMaskChannels, cfg.depth, cfg.height, cfg.width, cfg.spacing_mm);
    rec.ct = make_field(1, cfg.depth, cfg.height, cfg.width, cfg.spacing_mm);

    const uint64_t tex = substream(seed, "texture");
    int64_t idx = 0;
    for (int d = 0; d < cfg.depth; ++d) {
        const double tz = cfg.depth > 1 ? (d - cz) / cz : 0.0;
        const double taper = std::sqrt(std::max(0.2, 1.0 - cfg.body_taper * tz * tz));
        const double z = (d - cz) * sz;
        for (int h = 0; h < cfg.height; ++h) {
            const double y = (h - cy) * sy;
            for (int w = 0; w < cfg.width; ++w, ++idx) {
                const double x = (w - cx) * sx;
                const double bx = x / (body_ax * taper);
                const double by = y / (body_ay * taper);
                const bool in_body = bx * bx + by * by <= 1.0;

                const double px = x - ptv_cx, py = y - ptv_cy, pz = z - ptv_cz;
                const bool in_ptv = px * px + py * py + pz * pz <= ptv_r * ptv_r;

                const double lx = (x - oar_l_cx) / oar_l[0], ly = (y - ptv_cy) / oar_l[1],
                             lz = (z - ptv_cz) / oar_l[2];
                const bool in_oar_l = lx * lx + ly * ly + lz * lz <= 1.0;
                const double rx = (x - oar_r_cx) / oar_r[0], ry = (y - ptv_cy) / oar_r[1],
                             rz = (z - ptv_cz) / oar_r[2];
                const bool in_oar_r = rx * rx + ry * ry + rz * rz <= 1.0;

                rec.masks.at(kMaskBody, d, h, w) = in_body ? 1.0f : 0.0f;
                rec.masks.at(kMaskPtv, d, h, w) = in_ptv ? 1.0f : 0.0f;
                rec.masks.at(kMaskOarLeft, d, h, w) = in_oar_l ? 1.0f : 0.0f;
                rec.masks.at(kMaskOarRight, d, h, w) = in_oar_r ? 1.0f : 0.0f;

                double hu = cfg.air_hu;
                if (in_body) {
                    hu = cfg.tissue_hu;
                    if (in_ptv)
                        hu += cfg.ptv_delta_hu;
                    else if (in_oar_l)
                        hu += cfg.oar_left_delta_hu;
                    else if (in_oar_r)
                        hu += cfg.oar_right_delta_hu;
                    hu += cfg.texture_noise_hu * normal01(tex, static_cast<uint64_t>(idx));
                }
                rec.ct.at(0, d, h, w) = static_cast<float>(hu);
            }
        }
    }

    // Structures that poke outside their parents mean the configured
    // geometry does not fit.
    int64_t ptv_voxels = 0;
    for (int d = 0; d < cfg.depth; ++d)
        for (int h = 0; h < cfg.height; ++h)
            for (int w = 0; w < cfg.width; ++w) {
                const bool body = rec.masks.at(kMaskBody, d, h, w) != 0.0f;
                if (rec.masks.at(kMaskPtv, d, h, w) != 0.0f) {
                    ++ptv_voxels;
                    if (!body)
                        throw ConfigError("generate_case: target does not fit inside the body");
                }
                if ((rec.masks.at(kMaskOarLeft, d, h, w) != 0.0f ||
                     rec.masks.at(kMaskOarRight, d, h, w) != 0.0f) &&
                    !body)
                    throw ConfigError("generate_case: OAR does not fit inside the body");
            }
    if (ptv_voxels == 0)
        throw ConfigError("generate_case: target does not fit in the grid");

    rec.beams = BeamConfig::evenly_spaced(cfg.beam_count, cfg.width, cfg.depth,
                                          cfg.attenuation_mu);

    // Ground-truth fluence: target projection, shielded where the ray
    // crosses an OAR.
    const Field ptv = extract_channel(rec.masks, kMaskPtv);
    Field oars = extract_channel(rec.masks, kMaskOarLeft);
    {
        const Field oar_r_field = extract_channel(rec.masks, kMaskOarRight);
        for (size_t i = 0; i < oars.values.size(); ++i)
            oars.values[i] = std::max(oars.values[i], oar_r_field.values[i]);
    }
    rec.fluence = make_fluence(cfg.beam_count, cfg.width, cfg.depth);
    for (int b = 0; b < cfg.beam_count; ++b) {
        const Map2D ptv_proj = bev_projection(ptv, rec.beams.gantry_angles_deg[b]);
        const Map2D oar_proj = bev_projection(oars, rec.beams.gantry_angles_deg[b]);
        float* dst = rec.fluence.beam_ptr(b);
        for (size_t i = 0; i < ptv_proj.values.size(); ++i) {
            const double shield = oar_proj.values[i] > 1e-6f ? cfg.oar_shield : 1.0;
            dst[i] = static_cast<float>(ptv_proj.values[i] * shield * cfg.fluence_unit);
        }
    }

    const Field body = extract_channel(rec.masks, kMaskBody);
    rec.dose = dose_from_fluence(body, rec.fluence, rec.beams, cfg.attenuation_mu);

    // Normalize so the mean target dose is 1.
    double ptv_mean = 0.0;
    for (int64_t i = 0; i < rec.dose.numel(); ++i)
        if (ptv.values[static_cast<size_t>(i)] != 0.0f)
            ptv_mean += rec.dose.values[static_cast<size_t>(i)];
    ptv_mean /= static_cast<double>(ptv_voxels);
    if (!(ptv_mean > 0.0))
        throw NumericError("generate_case: zero mean target dose");
    for (float& v : rec.dose.values)
        v = static_cast<float>(v / ptv_mean);

    validate_case(rec);
    return rec;
}

PhantomDataset generate_dataset(uint64_t base_seed, int n_cases, const PhantomConfig& cfg,
                                double train_frac, double val_frac) {
    if (n_cases < 1)
        throw ConfigError("generate_dataset: need at least one case");
    if (!(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0))
        throw ConfigError("generate_dataset: bad split fractions");

    PhantomDataset ds;
    std::vector<std::string> ids;
    for (int i = 0; i < n_cases; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "case_%04d", i);
        ds.cases.push_back(generate_case(hash64(base_seed, 1000 + static_cast<uint64_t>(i)), cfg, buf));
        ids.push_back(buf);
    }

    std::vector<std::string> perm = ids;
    deterministic_shuffle(perm, substream(base_seed, "split"));
    const size_t n_train = static_cast<size_t>(std::ceil(train_frac * n_cases));
    const size_t n_val = static_cast<size_t>(std::ceil(val_frac * n_cases));
    for (size_t i = 0; i < perm.size(); ++i) {
        if (i < n_train)
            ds.split.train.push_back(perm[i]);
        else if (i < n_train + n_val)
            ds.split.val.push_back(perm[i]);
        else
            ds.split.test.push_back(perm[i]);
    }
    std::sort(ds.split.train.begin(), ds.split.train.end());
    std::sort(ds.split.val.begin(), ds.split.val.end());
    std::sort(ds.split.test.begin(), ds.split.test.end());
    return ds;
}

} // namespace fluencebench
