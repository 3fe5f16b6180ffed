// Python bindings for the core operations: array I/O, preprocessing,
// stress transforms, metrics, and the synthetic phantom.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fluencebench/errors.hpp"
#include "fluencebench/harness.hpp"
#include "fluencebench/metrics.hpp"
#include "fluencebench/model.hpp"
#include "fluencebench/perturb.hpp"
#include "fluencebench/phantom.hpp"

namespace py = pybind11;
namespace fb = fluencebench;

namespace {

fb::Field field_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr,
                           std::array<double, 3> spacing_mm) {
    if (arr.ndim() != 4)
        throw fb::ConfigError("expected a (channels, depth, height, width) array");
    fb::Field f = fb::make_field(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                                 static_cast<int>(arr.shape(2)), static_cast<int>(arr.shape(3)),
                                 spacing_mm);
    std::copy_n(arr.data(), f.numel(), f.values.data());
    fb::validate_field(f, "field");
    return f;
}

py::array_t<float> field_to_array(const fb::Field& f) {
    py::array_t<float> arr({f.channels, f.depth, f.height, f.width});
    std::copy_n(f.values.data(), f.numel(), arr.mutable_data());
    return arr;
}

fb::Map2D map_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 2)
        throw fb::ConfigError("expected a 2D array");
    fb::Map2D m = fb::make_map(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::copy_n(arr.data(), m.values.size(), m.values.data());
    return m;
}

py::array_t<float> map_to_array(const fb::Map2D& m) {
    py::array_t<float> arr({m.height, m.width});
    std::copy_n(m.values.data(), m.values.size(), arr.mutable_data());
    return arr;
}

fb::FluenceSet fluence_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 3)
        throw fb::ConfigError("expected a (beams, height, width) array");
    fb::FluenceSet fs = fb::make_fluence(static_cast<int>(arr.shape(0)),
                                         static_cast<int>(arr.shape(1)),
                                         static_cast<int>(arr.shape(2)));
    std::copy_n(arr.data(), fs.values.size(), fs.values.data());
    return fs;
}

py::array_t<float> fluence_to_array(const fb::FluenceSet& fs) {
    py::array_t<float> arr({fs.beam_count, fs.height, fs.width});
    std::copy_n(fs.values.data(), fs.values.size(), arr.mutable_data());
    return arr;
}

py::dict case_to_dict(const fb::CaseRecord& rec) {
    py::dict d;
    d["case_id"] = rec.case_id;
    d["ct"] = field_to_array(rec.ct);
    d["masks"] = field_to_array(rec.masks);
    d["dose"] = field_to_array(rec.dose);
    d["fluence"] = fluence_to_array(rec.fluence);
    d["spacing_mm"] = rec.ct.spacing_mm;
    d["gantry_angles_deg"] = rec.beams.gantry_angles_deg;
    return d;
}

} // namespace

PYBIND11_MODULE(_fluencebench, m) {
    m.doc() = "Robustness stress testing for two-stage fluence-map prediction";

    py::register_exception<fb::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<fb::NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def(
        "read_field",
        [](const std::string& path) {
            const fb::Field f = fb::read_field(path);
            return py::make_tuple(field_to_array(f), f.spacing_mm);
        },
        py::arg("path"), "Read a FARR1 file; returns (array, spacing_mm).");
    m.def(
        "write_field",
        [](const std::string& path, py::array_t<float, py::array::c_style | py::array::forcecast> arr,
           std::array<double, 3> spacing_mm) { fb::write_field(field_from_array(arr, spacing_mm), path); },
        py::arg("path"), py::arg("values"), py::arg("spacing_mm") = std::array<double, 3>{1.0, 1.0, 1.0});

    m.def(
        "resample_inplane",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> arr, int new_h, int new_w,
           std::array<double, 3> spacing_mm) {
            const fb::Field out = fb::resample_inplane(field_from_array(arr, spacing_mm), new_h, new_w);
            return py::make_tuple(field_to_array(out), out.spacing_mm);
        },
        py::arg("values"), py::arg("new_h"), py::arg("new_w"),
        py::arg("spacing_mm") = std::array<double, 3>{1.0, 1.0, 1.0});

    m.def(
        "normalize_ct",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> arr, float lo, float hi) {
            return field_to_array(fb::normalize_ct(field_from_array(arr, {1, 1, 1}), lo, hi));
        },
        py::arg("values"), py::arg("window_lo") = -160.0f, py::arg("window_hi") = 240.0f);

    m.def(
        "rigid_transform",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> arr, double theta_deg,
           std::array<double, 2> shift_mm, float fill, bool rebinarize,
           std::array<double, 3> spacing_mm) {
            return field_to_array(fb::rigid_transform(field_from_array(arr, spacing_mm), theta_deg,
                                                      shift_mm, fill, rebinarize));
        },
        py::arg("values"), py::arg("theta_deg"), py::arg("shift_mm") = std::array<double, 2>{0.0, 0.0},
        py::arg("fill") = 0.0f, py::arg("rebinarize_masks") = false,
        py::arg("spacing_mm") = std::array<double, 3>{1.0, 1.0, 1.0});

    m.def(
        "gaussian_noise",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> arr, double sigma,
           uint64_t seed) {
            return field_to_array(fb::gaussian_noise(field_from_array(arr, {1, 1, 1}), sigma, seed));
        },
        py::arg("values"), py::arg("sigma"), py::arg("seed") = 0);

    m.def(
        "bias_field",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> arr, double strength,
           double offset, uint64_t seed) {
            return field_to_array(fb::bias_field(field_from_array(arr, {1, 1, 1}), strength, offset, seed));
        },
        py::arg("values"), py::arg("strength"), py::arg("offset") = 0.0, py::arg("seed") = 0);

    m.def("subsample_cases", &fb::subsample_cases, py::arg("case_ids"), py::arg("alpha"),
          py::arg("seed") = 0);

    m.def(
        "ssim",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
           py::array_t<float, py::array::c_style | py::array::forcecast> b, double dynamic_range) {
            return fb::ssim(map_from_array(a), map_from_array(b), dynamic_range);
        },
        py::arg("a"), py::arg("b"), py::arg("dynamic_range") = 1.0);

    m.def(
        "energy_error_pct",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> pred,
           py::array_t<float, py::array::c_style | py::array::forcecast> gt) {
            std::vector<double> per_beam;
            const double mean = fb::energy_error_pct(fluence_from_array(pred),
                                                     fluence_from_array(gt), &per_beam);
            return py::make_tuple(mean, per_beam);
        },
        py::arg("pred"), py::arg("gt"), "Returns (mean_over_beams, per_beam).");

    m.def("quantile", &fb::quantile, py::arg("values"), py::arg("q"));

    m.def(
        "dvh",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> dose,
           py::array_t<float, py::array::c_style | py::array::forcecast> masks, int channel,
           const std::vector<double>& edges) {
            const fb::DvhCurve curve = fb::dvh(field_from_array(dose, {1, 1, 1}),
                                               field_from_array(masks, {1, 1, 1}), channel, edges, "roi");
            return py::make_tuple(curve.dose_edges, curve.volume_fraction);
        },
        py::arg("dose"), py::arg("masks"), py::arg("mask_channel"), py::arg("dose_edges"));

    m.def(
        "wilcoxon_signed_rank",
        [](const std::vector<double>& x, const std::vector<double>& y) {
            const fb::WilcoxonResult r = fb::wilcoxon_signed_rank(x, y);
            py::dict d;
            d["statistic"] = r.w_statistic;
            d["p_two_sided"] = r.p_two_sided;
            d["n_used"] = r.n_used;
            d["exact"] = r.exact;
            return d;
        },
        py::arg("x"), py::arg("y"));

    m.def(
        "generate_case",
        [](uint64_t seed) { return case_to_dict(fb::generate_case(seed, fb::PhantomConfig{})); },
        py::arg("seed"));

    m.def(
        "bev_projection",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> vol, double angle_deg,
           std::array<double, 3> spacing_mm) {
            return map_to_array(fb::bev_projection(field_from_array(vol, spacing_mm), angle_deg));
        },
        py::arg("volume"), py::arg("angle_deg"),
        py::arg("spacing_mm") = std::array<double, 3>{1.0, 1.0, 1.0});

    m.def(
        "two_stage_forward",
        [](const std::string& checkpoint_dir, const std::string& case_dir, const std::string& case_id,
           const std::string& spec_json) {
            fb::TwoStageModel model;
            model.dose = fb::load_checkpoint(std::filesystem::path(checkpoint_dir) / "dose");
            model.fluence = fb::load_checkpoint(std::filesystem::path(checkpoint_dir) / "fluence");
            const fb::CaseRecord rec = fb::read_case(case_dir, case_id);
            const fb::PerturbationSpec spec =
                fb::PerturbationSpec::from_json(nlohmann::json::parse(spec_json));
            const fb::TwoStageOutput out = fb::two_stage_forward(model, rec, spec);
            py::dict d;
            d["dose"] = field_to_array(out.dose);
            d["fluence"] = fluence_to_array(out.fluence);
            return d;
        },
        py::arg("checkpoint_dir"), py::arg("case_dir"), py::arg("case_id"),
        py::arg("spec_json") = std::string("{\"kind\":\"none\"}"));
}
