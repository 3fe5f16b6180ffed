#pragma once
#include <string>
#include <vector>

#include "fluencebench/case_record.hpp"
#include "fluencebench/field.hpp"

namespace fluencebench {

// One evaluated (case, scenario, severity) row.
struct MetricRecord {
    std::string case_id;
    std::string scenario;
    std::string severity;
    double ssim = 0.0;
    double energy_err_pct = 0.0; // per-case mean over beams
    std::vector<double> per_beam_energy_err;
    double dynamic_range = 0.0; // SSIM L used for this case
};

std::string metric_records_csv(const std::vector<MetricRecord>& records);
std::vector<MetricRecord> metric_records_from_csv(const std::string& csv);

struct DvhCurve {
    std::string roi;
    std::vector<double> dose_edges;
    std::vector<double> volume_fraction;
};

std::string dvh_csv(const DvhCurve& curve);

struct SsimResult {
    double value = 0.0;
    bool global_fallback = false; // map smaller than the window
};

// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5),
// C1=(0.01*L)^2, C2=(0.03*L)^2, valid-region aggregation. Maps smaller
// than the window fall back to global statistics and are flagged.
SsimResult ssim_detailed(const Map2D& a, const Map2D& b, double dynamic_range);
double ssim(const Map2D& a, const Map2D& b, double dynamic_range);

// Per beam: 100*|sum(pred_b) - sum(gt_b)| / sum(gt_b); returns the mean
// over beams, optionally exposing per-beam values.
double energy_error_pct(const FluenceSet& pred, const FluenceSet& gt,
                        std::vector<double>* per_beam = nullptr);

// Type-7 quantile (linear interpolation on the sorted sample).
double quantile(std::vector<double> values, double q);

// Cumulative DVH: fraction of masked voxels with dose >= each edge.
DvhCurve dvh(const Field& dose, const Field& masks, int mask_channel,
             const std::vector<double>& dose_edges, const std::string& roi_label);

struct WilcoxonResult {
    double w_statistic = 0.0; // min(W+, W-)
    double p_two_sided = 1.0;
    int n_used = 0; // pairs remaining after dropping zero differences
    bool exact = true;
};

// Paired signed-rank test. Zero differences are dropped, ties take
// midranks. Exact two-sided p by full sign enumeration for <= 20
// remaining pairs, else a tie-corrected normal approximation with
// continuity correction.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x,
                                    const std::vector<double>& y);

} // namespace fluencebench
