#pragma once

#include "din/frame.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace din {

/// 10 log10(255^2 / MSE), with both frames mapped to the 8-bit scale and the
/// MSE pooled over all channels. Identical frames give +infinity.
double psnr(const Frame& a, const Frame& b);

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 255. Averaged over valid window positions, then
/// over channels. Both dimensions must be at least 11.
double ssim(const Frame& a, const Frame& b);

struct MetricsRow {
    std::string image;
    std::string method;
    double psnr_db = 0;
    double ssim = 0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
    /// One row per method, image = "mean".
    std::vector<MetricsRow> aggregates;

    /// Recomputes `aggregates` from `rows`, methods in first-seen order.
    void aggregate();
    /// Header "image,method,psnr_db,ssim"; per-image rows then aggregates.
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
    const MetricsRow& mean_for(const std::string& method) const;
};

/// Scores every image in `targets_dir` against the same filename in
/// `outputs_dir`. Throws listing every target that has no counterpart.
MetricsReport evaluate(const std::filesystem::path& outputs_dir,
                       const std::filesystem::path& targets_dir, const std::string& method);

/// Formats +infinity as "inf".
std::string format_metric(double value);

}  // namespace din
