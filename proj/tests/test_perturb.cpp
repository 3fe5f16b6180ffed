#include <doctest.h>

#include <cmath>

#include "fluencebench/errors.hpp"
#include "fluencebench/hashrand.hpp"
#include "fluencebench/perturb.hpp"

using namespace fluencebench;

namespace {

// Smooth single-slice test image: centered Gaussian blob, 1mm spacing.
Field gaussian_blob(int n = 64, double sigma_px = 10.0) {
    Field f = make_field(1, 1, n, n, {1.0, 1.0, 1.0});
    const double c = (n - 1) / 2.0;
    for (int h = 0; h < n; ++h)
        for (int w = 0; w < n; ++w) {
            const double dy = h - c, dx = w - c;
            f.at(0, 0, h, w) =
                static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_px * sigma_px)));
        }
    return f;
}

Field random_field(uint64_t seed, int c = 1, int d = 4, int h = 8, int w = 8) {
    Field f = make_field(c, d, h, w, {3.0, 2.0, 2.0});
    for (size_t i = 0; i < f.values.size(); ++i)
        f.values[i] = static_cast<float>(uniform01(seed, i));
    return f;
}

double mean_of(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

double std_of(const std::vector<float>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (float x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace

TEST_SUITE("perturb") {

TEST_CASE("rigid transform with zero motion is the identity") {
    const Field f = random_field(3);
    const Field g = rigid_transform(f, 0.0, {0.0, 0.0}, 0.0f);
    for (size_t i = 0; i < f.values.size(); ++i)
        CHECK(g.values[i] == doctest::Approx(f.values[i]).epsilon(1e-6));
}

TEST_CASE("integer pixel shift moves columns and fills the vacated one") {
    Field f = make_field(1, 1, 3, 3, {1.0, 1.0, 1.0});
    f.values = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    const float fill = -1.0f;
    // +1 mm along columns at 1 mm spacing: output column w samples w+1.
    const Field g = rigid_transform(f, 0.0, {0.0, 1.0}, fill);
    for (int h = 0; h < 3; ++h) {
        CHECK(g.at(0, 0, h, 0) == doctest::Approx(f.at(0, 0, h, 1)));
        CHECK(g.at(0, 0, h, 1) == doctest::Approx(f.at(0, 0, h, 2)));
        CHECK(g.at(0, 0, h, 2) == fill);
    }
}

TEST_CASE("pixel shift respects spacing") {
    Field f = make_field(1, 1, 3, 3, {1.0, 1.0, 2.0});
    f.values = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    // 2 mm at 2 mm column spacing is one pixel.
    const Field g = rigid_transform(f, 0.0, {0.0, 2.0}, 0.0f);
    CHECK(g.at(0, 0, 0, 0) == doctest::Approx(2.0));
    CHECK(g.at(0, 0, 0, 2) == 0.0f);
}

TEST_CASE("rotation round trip stays close on a smooth image") {
    const Field f = gaussian_blob();
    const Field once = rigid_transform(f, 5.0, {0.0, 0.0}, 0.0f);
    const Field back = rigid_transform(once, -5.0, {0.0, 0.0}, 0.0f);
    double err = 0.0;
    int64_t count = 0;
    for (int h = 2; h < f.height - 2; ++h)
        for (int w = 2; w < f.width - 2; ++w) {
            err += std::abs(back.at(0, 0, h, w) - f.at(0, 0, h, w));
            ++count;
        }
    CHECK(err / static_cast<double>(count) < 0.02);
}

TEST_CASE("rigid transform preserves constant images away from fill") {
    Field f = make_field(1, 2, 16, 16, {1.0, 1.0, 1.0}, 1.0f);
    const Field g = rigid_transform(f, 10.0, {0.0, 0.0}, 0.0f);
    // Central region never samples outside the grid.
    for (int d = 0; d < 2; ++d)
        for (int h = 4; h < 12; ++h)
            for (int w = 4; w < 12; ++w)
                CHECK(g.at(0, d, h, w) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("mask channels re-binarize after interpolation") {
    Field f = make_field(1, 1, 8, 8, {1.0, 1.0, 1.0});
    for (int h = 2; h < 6; ++h)
        for (int w = 2; w < 6; ++w)
            f.at(0, 0, h, w) = 1.0f;
    const Field g = rigid_transform(f, 7.5, {0.4, -0.3}, 0.0f, true);
    for (float v : g.values)
        CHECK((v == 0.0f || v == 1.0f));
}

TEST_CASE("rigid transform rejects out-of-range rotations") {
    const Field f = random_field(5);
    CHECK_THROWS_AS(rigid_transform(f, 46.0, {0.0, 0.0}, 0.0f), ConfigError);
}

TEST_CASE("zero-sigma noise is the identity, bitwise") {
    const Field f = random_field(7);
    const Field g = gaussian_noise(f, 0.0, 99);
    CHECK(g.values == f.values);
}

TEST_CASE("noise is deterministic per seed and differs across seeds") {
    const Field f = random_field(9);
    const Field a = gaussian_noise(f, 0.1, 1234);
    const Field b = gaussian_noise(f, 0.1, 1234);
    const Field c = gaussian_noise(f, 0.1, 4321);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
}

TEST_CASE("noise sample statistics match the requested sigma") {
    const Field zero = make_field(1, 16, 64, 64, {1, 1, 1}, 0.0f);
    const double sigma = 0.1;
    const Field noisy = gaussian_noise(zero, sigma, 2024);
    const double n = static_cast<double>(zero.numel());
    CHECK(std::abs(mean_of(noisy.values)) < 4.0 * sigma / std::sqrt(n));
    CHECK(std_of(noisy.values) == doctest::Approx(sigma).epsilon(0.02));
}

TEST_CASE("independent seeds give a sqrt(2)-sigma difference") {
    const Field zero = make_field(1, 16, 64, 64, {1, 1, 1}, 0.0f);
    const double sigma = 0.1;
    const Field a = gaussian_noise(zero, sigma, 1);
    const Field b = gaussian_noise(zero, sigma, 2);
    std::vector<float> diff(a.values.size());
    for (size_t i = 0; i < diff.size(); ++i)
        diff[i] = a.values[i] - b.values[i];
    CHECK(std_of(diff) == doctest::Approx(std::sqrt(2.0) * sigma).epsilon(0.03));
}

TEST_CASE("bias field with zero strength and offset is the identity") {
    const Field f = random_field(13);
    const Field g = bias_field(f, 0.0, 0.0, 55);
    CHECK(g.values == f.values);
}

TEST_CASE("zero-strength bias with an offset is a pure shift") {
    Field f = make_field(1, 2, 4, 4, {1, 1, 1}, 1.0f);
    const Field g = bias_field(f, 0.0, 0.2, 55);
    for (float v : g.values)
        CHECK(v == doctest::Approx(1.2).epsilon(1e-7));
}

TEST_CASE("bias amplitude is normalized to the requested strength") {
    const Field ones = make_field(1, 1, 32, 32, {1, 1, 1}, 1.0f);
    const double s = 0.3, c = 0.1;
    const Field g = bias_field(ones, s, c, 77);
    double max_dev = 0.0;
    for (float v : g.values) {
        CHECK(v >= doctest::Approx(1.0 - s + c).epsilon(1e-6));
        CHECK(v <= doctest::Approx(1.0 + s + c).epsilon(1e-6));
        max_dev = std::max(max_dev, std::abs(static_cast<double>(v) - c - 1.0));
    }
    // The expansion is rescaled so its max magnitude is exactly `strength`.
    CHECK(max_dev == doctest::Approx(s).epsilon(1e-6));
}

TEST_CASE("bias field stays positive at the maximum strength") {
    const Field ones = make_field(1, 1, 16, 16, {1, 1, 1}, 1.0f);
    const Field g = bias_field(ones, 0.5, 0.0, 3);
    for (float v : g.values)
        CHECK(v > 0.0f);
}

TEST_CASE("bias field is a pointwise affine map of the input") {
    const Field f = random_field(17);
    Field f2 = f;
    for (float& v : f2.values)
        v *= 2.0f;
    const Field g1 = bias_field(f, 0.25, 0.0, 7);
    const Field g2 = bias_field(f2, 0.25, 0.0, 7);
    for (size_t i = 0; i < g1.values.size(); ++i)
        CHECK(g2.values[i] == doctest::Approx(2.0 * g1.values[i]).epsilon(1e-5));

    const Field h0 = bias_field(f, 0.25, 0.0, 7);
    const Field h1 = bias_field(f, 0.25, 0.3, 7);
    for (size_t i = 0; i < h0.values.size(); ++i)
        CHECK(h1.values[i] == doctest::Approx(h0.values[i] + 0.3).epsilon(1e-6));
}

TEST_CASE("bias strength outside [0, 0.5] is rejected") {
    const Field f = random_field(19);
    CHECK_THROWS_AS(bias_field(f, 0.6, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(bias_field(f, -0.1, 0.0, 1), ConfigError);
}

TEST_CASE("subsampling keeps everything at alpha one") {
    const std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
    const auto out = subsample_cases(ids, 1.0, 42);
    CHECK(out.size() == ids.size());
    auto sorted = out;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == ids);
}

TEST_CASE("subsampling is deterministic and sized by ceil(alpha n)") {
    std::vector<std::string> ids;
    for (int i = 0; i < 8; ++i)
        ids.push_back("case_" + std::to_string(i));
    const auto a = subsample_cases(ids, 0.5, 9);
    const auto b = subsample_cases(ids, 0.5, 9);
    CHECK(a.size() == 4);
    CHECK(a == b);
    CHECK(subsample_cases(ids, 0.3, 9).size() == 3); // ceil(2.4)
}

TEST_CASE("subsets nest across alpha for a fixed seed") {
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i)
        ids.push_back("case_" + std::to_string(i));
    const auto small = subsample_cases(ids, 0.25, 31);
    const auto large = subsample_cases(ids, 0.75, 31);
    for (const auto& id : small)
        CHECK(std::find(large.begin(), large.end(), id) != large.end());
}

TEST_CASE("subsampling rejects bad input") {
    CHECK_THROWS_AS(subsample_cases({}, 0.5, 1), ConfigError);
    CHECK_THROWS_AS(subsample_cases({"a"}, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(subsample_cases({"a"}, 1.5, 1), ConfigError);
}

TEST_CASE("perturbation specs round trip through JSON") {
    PerturbationSpec s;
    s.kind = PerturbationKind::Geometric;
    s.theta_deg = 5.0;
    s.shift_mm = {3.0, -1.0};
    s.seed = 77;
    const PerturbationSpec t = PerturbationSpec::from_json(s.to_json());
    CHECK(t.kind == s.kind);
    CHECK(t.theta_deg == s.theta_deg);
    CHECK(t.shift_mm == s.shift_mm);
    CHECK(t.seed == s.seed);

    PerturbationSpec bad;
    bad.kind = PerturbationKind::Noise;
    bad.sigma = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.kind = PerturbationKind::DataFraction;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(kind_from_name("wobble"), ConfigError);
}

} // TEST_SUITE
