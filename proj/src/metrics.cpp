#include "fluencebench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fluencebench/errors.hpp"

namespace fluencebench {

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

std::string metric_records_csv(const std::vector<MetricRecord>& records) {
    std::ostringstream os;
    os << "case_id,scenario,severity,ssim,energy_err_pct\n";
    for (const auto& r : records)
        os << r.case_id << ',' << r.scenario << ',' << r.severity << ','
           << format_double(r.ssim) << ',' << format_double(r.energy_err_pct) << '\n';
    return os.str();
}

std::vector<MetricRecord> metric_records_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "case_id,scenario,severity,ssim,energy_err_pct")
        throw ConfigError("metric records CSV: bad header");
    std::vector<MetricRecord> out;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        MetricRecord r;
        std::string ssim_s, err_s;
        if (!std::getline(ls, r.case_id, ',') || !std::getline(ls, r.scenario, ',') ||
            !std::getline(ls, r.severity, ',') || !std::getline(ls, ssim_s, ',') ||
            !std::getline(ls, err_s))
            throw ConfigError("metric records CSV: malformed row: " + line);
        r.ssim = std::stod(ssim_s);
        r.energy_err_pct = std::stod(err_s);
        out.push_back(std::move(r));
    }
    return out;
}

std::string dvh_csv(const DvhCurve& curve) {
    std::ostringstream os;
    os << "dose_edge,volume_fraction\n";
    for (size_t i = 0; i < curve.dose_edges.size(); ++i)
        os << format_double(curve.dose_edges[i]) << ',' << format_double(curve.volume_fraction[i])
           << '\n';
    return os.str();
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kSsimWindow);
    const int half = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - half;
        k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += k[i];
    }
    for (double& v : k)
        v /= sum;
    return k;
}

// Separable valid-mode Gaussian filter; output is (h-10) x (w-10).
std::vector<double> gauss_filter_valid(const std::vector<double>& img, int h, int w,
                                       const std::vector<double>& k) {
    const int vw = w - kSsimWindow + 1;
    const int vh = h - kSsimWindow + 1;
    std::vector<double> rows(static_cast<size_t>(h) * vw, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i)
                acc += k[i] * img[static_cast<size_t>(y) * w + x + i];
            rows[static_cast<size_t>(y) * vw + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(vh) * vw, 0.0);
    for (int y = 0; y < vh; ++y)
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i)
                acc += k[i] * rows[static_cast<size_t>(y + i) * vw + x];
            out[static_cast<size_t>(y) * vw + x] = acc;
        }
    return out;
}

} // namespace

SsimResult ssim_detailed(const Map2D& a, const Map2D& b, double dynamic_range) {
    if (a.height != b.height || a.width != b.width)
        throw ConfigError("ssim: shape mismatch");
    if (!(dynamic_range > 0.0))
        throw ConfigError("ssim: dynamic_range must be > 0");
    const int64_t n = static_cast<int64_t>(a.height) * a.width;
    if (n == 0)
        throw ConfigError("ssim: empty maps");

    const double c1 = 0.01 * dynamic_range * 0.01 * dynamic_range;
    const double c2 = 0.03 * dynamic_range * 0.03 * dynamic_range;

    SsimResult res;
    if (a.height < kSsimWindow || a.width < kSsimWindow) {
        // Too small for the local window: single global statistic.
        res.global_fallback = true;
        double mx = 0.0, my = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            mx += a.values[i];
            my += b.values[i];
        }
        mx /= n;
        my /= n;
        double vx = 0.0, vy = 0.0, cov = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double dx = a.values[i] - mx;
            const double dy = b.values[i] - my;
            vx += dx * dx;
            vy += dy * dy;
            cov += dx * dy;
        }
        vx /= n;
        vy /= n;
        cov /= n;
        res.value = ((2 * mx * my + c1) * (2 * cov + c2)) /
                    ((mx * mx + my * my + c1) * (vx + vy + c2));
        return res;
    }

    const std::vector<double> k = gaussian_kernel();
    std::vector<double> xa(a.values.begin(), a.values.end());
    std::vector<double> xb(b.values.begin(), b.values.end());
    std::vector<double> xaa(xa.size()), xbb(xb.size()), xab(xa.size());
    for (size_t i = 0; i < xa.size(); ++i) {
        xaa[i] = xa[i] * xa[i];
        xbb[i] = xb[i] * xb[i];
        xab[i] = xa[i] * xb[i];
    }
    const auto mu_a = gauss_filter_valid(xa, a.height, a.width, k);
    const auto mu_b = gauss_filter_valid(xb, a.height, a.width, k);
    const auto m_aa = gauss_filter_valid(xaa, a.height, a.width, k);
    const auto m_bb = gauss_filter_valid(xbb, a.height, a.width, k);
    const auto m_ab = gauss_filter_valid(xab, a.height, a.width, k);

    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double va = m_aa[i] - mu_a[i] * mu_a[i];
        const double vb = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    res.value = acc / static_cast<double>(mu_a.size());
    return res;
}

double ssim(const Map2D& a, const Map2D& b, double dynamic_range) {
    return ssim_detailed(a, b, dynamic_range).value;
}

double energy_error_pct(const FluenceSet& pred, const FluenceSet& gt,
                        std::vector<double>* per_beam) {
    if (pred.beam_count != gt.beam_count || pred.height != gt.height || pred.width != gt.width)
        throw ConfigError("energy_error_pct: fluence shape mismatch");
    if (gt.beam_count < 1)
        throw ConfigError("energy_error_pct: no beams");
    if (per_beam)
        per_beam->clear();
    double mean = 0.0;
    for (int b = 0; b < gt.beam_count; ++b) {
        double sp = 0.0, sg = 0.0;
        const float* pp = pred.beam_ptr(b);
        const float* pg = gt.beam_ptr(b);
        for (int64_t i = 0; i < gt.beam_stride(); ++i) {
            sp += pp[i];
            sg += pg[i];
        }
        if (!(sg > 0.0))
            throw NumericError("energy_error_pct: degenerate reference (zero-energy beam " +
                               std::to_string(b) + ")");
        const double e = 100.0 * std::abs(sp - sg) / sg;
        if (per_beam)
            per_beam->push_back(e);
        mean += e;
    }
    return mean / gt.beam_count;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty())
        throw ConfigError("quantile: empty input");
    if (!(q >= 0.0 && q <= 1.0))
        throw ConfigError("quantile: q must lie in [0,1]");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const size_t lo = static_cast<size_t>(h);
    if (lo + 1 >= values.size())
        return values.back();
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

DvhCurve dvh(const Field& dose, const Field& masks, int mask_channel,
             const std::vector<double>& dose_edges, const std::string& roi_label) {
    if (dose.channels != 1)
        throw ConfigError("dvh: dose must be single channel");
    if (dose.depth != masks.depth || dose.height != masks.height || dose.width != masks.width)
        throw ConfigError("dvh: dose and mask shapes differ");
    if (mask_channel < 0 || mask_channel >= masks.channels)
        throw ConfigError("dvh: mask channel out of range");
    for (size_t i = 1; i < dose_edges.size(); ++i)
        if (!(dose_edges[i] > dose_edges[i - 1]))
            throw ConfigError("dvh: dose edges must be strictly ascending");

    const int64_t n = static_cast<int64_t>(dose.depth) * dose.slice_stride();
    const float* dm = dose.values.data();
    const float* mm = masks.values.data() + static_cast<int64_t>(mask_channel) * n;

    std::vector<double> roi_doses;
    for (int64_t i = 0; i < n; ++i)
        if (mm[i] != 0.0f)
            roi_doses.push_back(dm[i]);
    if (roi_doses.empty())
        throw ConfigError("dvh: empty mask");

    DvhCurve curve;
    curve.roi = roi_label;
    curve.dose_edges = dose_edges;
    curve.volume_fraction.resize(dose_edges.size());
    for (size_t e = 0; e < dose_edges.size(); ++e) {
        int64_t count = 0;
        for (double v : roi_doses)
            if (v >= dose_edges[e])
                ++count;
        curve.volume_fraction[e] = static_cast<double>(count) / static_cast<double>(roi_doses.size());
    }
    return curve;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

} // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw ConfigError("wilcoxon_signed_rank: length mismatch");
    if (x.empty())
        throw ConfigError("wilcoxon_signed_rank: empty input");

    std::vector<double> d;
    for (size_t i = 0; i < x.size(); ++i) {
        const double di = x[i] - y[i];
        if (di != 0.0)
            d.push_back(di);
    }
    WilcoxonResult res;
    res.n_used = static_cast<int>(d.size());
    if (d.empty()) {
        res.w_statistic = 0.0;
        res.p_two_sided = 1.0;
        return res;
    }

    const int m = static_cast<int>(d.size());
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return std::abs(d[i]) < std::abs(d[j]); });

    // Midranks over tied |d| groups.
    std::vector<double> rank(m);
    int i = 0;
    while (i < m) {
        int j = i;
        while (j + 1 < m && std::abs(d[order[j + 1]]) == std::abs(d[order[i]]))
            ++j;
        const double mid = (i + j) / 2.0 + 1.0;
        for (int t = i; t <= j; ++t)
            rank[order[t]] = mid;
        i = j + 1;
    }

    double w_plus = 0.0, total = 0.0;
    for (int t = 0; t < m; ++t) {
        total += rank[t];
        if (d[t] > 0.0)
            w_plus += rank[t];
    }
    const double w_minus = total - w_plus;
    const double w_obs = std::min(w_plus, w_minus);
    res.w_statistic = w_obs;

    if (m <= 20) {
        // Exact: enumerate all sign assignments and count those whose
        // min(W+, W-) is at least as extreme as observed.
        const uint64_t combos = 1ULL << m;
        uint64_t hits = 0;
        for (uint64_t s = 0; s < combos; ++s) {
            double wp = 0.0;
            for (int t = 0; t < m; ++t)
                if (s & (1ULL << t))
                    wp += rank[t];
            if (std::min(wp, total - wp) <= w_obs + 1e-12)
                ++hits;
        }
        res.p_two_sided = static_cast<double>(hits) / static_cast<double>(combos);
        res.exact = true;
    } else {
        // W+ = sum of rank_i * Bernoulli(1/2): mean T/2, variance
        // sum(rank^2)/4. Midranks make this automatically tie-corrected.
        double sum_sq = 0.0;
        for (int t = 0; t < m; ++t)
            sum_sq += rank[t] * rank[t];
        const double mu = total / 2.0;
        const double sd = std::sqrt(sum_sq / 4.0);
        const double z = (w_obs - mu + 0.5) / sd;
        res.p_two_sided = std::min(1.0, 2.0 * normal_cdf(z));
        res.exact = false;
    }
    return res;
}

} // namespace fluencebench
