#include "fluencebench/case_record.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fluencebench/errors.hpp"

namespace fluencebench {

BeamConfig BeamConfig::evenly_spaced(int beam_count, int fluence_h, int fluence_w,
                                     double attenuation_mu) {
    if (beam_count < 1)
        throw ConfigError("BeamConfig: beam_count must be >= 1");
    BeamConfig bc;
    bc.beam_count = beam_count;
    bc.fluence_h = fluence_h;
    bc.fluence_w = fluence_w;
    bc.attenuation_mu = attenuation_mu;
    bc.gantry_angles_deg.resize(beam_count);
    for (int b = 0; b < beam_count; ++b)
        bc.gantry_angles_deg[b] = 360.0 * b / beam_count;
    return bc;
}

Map2D FluenceSet::beam(int b) const {
    Map2D m = make_map(height, width);
    std::memcpy(m.values.data(), beam_ptr(b), beam_stride() * sizeof(float));
    return m;
}

FluenceSet make_fluence(int beam_count, int height, int width, float fill) {
    FluenceSet fs;
    fs.beam_count = beam_count;
    fs.height = height;
    fs.width = width;
    fs.values.assign(static_cast<size_t>(beam_count) * height * width, fill);
    return fs;
}

Field fluence_to_field(const FluenceSet& fs) {
    Field f = make_field(fs.beam_count, 1, fs.height, fs.width, {1.0, 1.0, 1.0});
    f.values = fs.values;
    validate_field(f, "fluence_to_field");
    return f;
}

FluenceSet fluence_from_field(const Field& f) {
    if (f.depth != 1)
        throw ConfigError("fluence_from_field: expected shape [B,1,Hf,Wf]");
    FluenceSet fs = make_fluence(f.channels, f.height, f.width);
    fs.values = f.values;
    return fs;
}

void validate_case(const CaseRecord& rec) {
    validate_field(rec.ct, rec.case_id + ": ct");
    validate_field(rec.masks, rec.case_id + ": masks");
    validate_field(rec.dose, rec.case_id + ": dose");
    if (rec.ct.channels != 1 || rec.dose.channels != 1)
        throw ConfigError(rec.case_id + ": ct and dose must be single channel");
    Field ct_shape = rec.ct;
    Field mask_shape = rec.masks;
    mask_shape.channels = 1;
    mask_shape.values.resize(static_cast<size_t>(mask_shape.numel()));
    if (!(rec.ct.depth == rec.masks.depth && rec.ct.height == rec.masks.height &&
          rec.ct.width == rec.masks.width && rec.ct.spacing_mm == rec.masks.spacing_mm))
        throw ConfigError(rec.case_id + ": ct and masks grids differ");
    if (!rec.ct.same_grid(rec.dose))
        throw ConfigError(rec.case_id + ": ct and dose grids differ");
    for (float v : rec.masks.values)
        if (v != 0.0f && v != 1.0f)
            throw ConfigError(rec.case_id + ": mask channels must be binary");
    for (float v : rec.dose.values)
        if (v < 0.0f)
            throw ConfigError(rec.case_id + ": dose must be non-negative");
    if (rec.fluence.beam_count != rec.beams.beam_count)
        throw ConfigError(rec.case_id + ": fluence beam count differs from beam config");
    if (static_cast<int>(rec.beams.gantry_angles_deg.size()) != rec.beams.beam_count)
        throw ConfigError(rec.case_id + ": gantry angle list length mismatch");
    for (double a : rec.beams.gantry_angles_deg)
        if (a < 0.0 || a >= 360.0)
            throw ConfigError(rec.case_id + ": gantry angles must lie in [0,360)");
    for (float v : rec.fluence.values)
        if (!(v >= 0.0f) || !std::isfinite(v))
            throw ConfigError(rec.case_id + ": fluence must be finite and non-negative");
}

void write_case(const CaseRecord& rec, const std::filesystem::path& dir) {
    validate_case(rec);
    std::filesystem::create_directories(dir);
    write_field(rec.ct, dir / "ct.farr");
    write_field(rec.masks, dir / "masks.farr");
    write_field(rec.dose, dir / "dose.farr");
    write_field(fluence_to_field(rec.fluence), dir / "fluence.farr");

    nlohmann::json bj;
    bj["beam_count"] = rec.beams.beam_count;
    bj["gantry_angles_deg"] = rec.beams.gantry_angles_deg;
    bj["fluence_shape"] = {rec.beams.fluence_h, rec.beams.fluence_w};
    bj["attenuation_mu"] = rec.beams.attenuation_mu;
    std::ofstream out(dir / "beams.json", std::ios::trunc);
    if (!out)
        throw ConfigError("write_case: cannot open " + (dir / "beams.json").string());
    out << bj.dump(2) << "\n";
}

CaseRecord read_case(const std::filesystem::path& dir, const std::string& case_id) {
    CaseRecord rec;
    rec.case_id = case_id;
    rec.ct = read_field(dir / "ct.farr");
    rec.masks = read_field(dir / "masks.farr");
    rec.dose = read_field(dir / "dose.farr");
    rec.fluence = fluence_from_field(read_field(dir / "fluence.farr"));

    std::ifstream in(dir / "beams.json");
    if (!in)
        throw ConfigError("read_case: cannot open " + (dir / "beams.json").string());
    nlohmann::json bj;
    try {
        in >> bj;
        rec.beams.beam_count = bj.at("beam_count").get<int>();
        rec.beams.gantry_angles_deg = bj.at("gantry_angles_deg").get<std::vector<double>>();
        const auto shape = bj.at("fluence_shape").get<std::vector<int>>();
        if (shape.size() != 2)
            throw ConfigError("read_case: malformed fluence_shape");
        rec.beams.fluence_h = shape[0];
        rec.beams.fluence_w = shape[1];
        rec.beams.attenuation_mu = bj.at("attenuation_mu").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("read_case: malformed beams.json in " + dir.string() + ": " + e.what());
    }
    validate_case(rec);
    return rec;
}

} // namespace fluencebench
