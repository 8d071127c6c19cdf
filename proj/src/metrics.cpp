#include "din/metrics.hpp"

#include "din/image_io.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace din {

namespace {

void require_same_shape(const Frame& a, const Frame& b, const char* who) {
    if (a.empty() || !a.same_shape(b))
        throw std::invalid_argument(std::string(who) + ": frames must be non-empty and equally sized");
}

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> g{};
    double total = 0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        g[i] = std::exp(-(d * d) / (2.0 * 1.5 * 1.5));
        total += g[i];
    }
    for (auto& v : g) v /= total;
    return g;
}

// Separable valid-mode filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::array<double, kWindow>& g) {
    const int ow = w - kWindow + 1, oh = h - kWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < kWindow; ++k) s += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < kWindow; ++k) s += g[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

}  // namespace

double psnr(const Frame& a, const Frame& b) {
    require_same_shape(a, b, "psnr");
    const double sa = 255.0 / a.max_value();
    const double sb = 255.0 / b.max_value();
    double sq = 0;
    auto pa = a.pixels();
    auto pb = b.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double d = pa[i] * sa - pb[i] * sb;
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(pa.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Frame& a, const Frame& b) {
    require_same_shape(a, b, "ssim");
    const int h = a.height(), w = a.width();
    if (h < kWindow || w < kWindow)
        throw std::invalid_argument("ssim: image " + std::to_string(w) + "x" + std::to_string(h) +
                                    " is smaller than the 11x11 window");
    constexpr double c1 = (0.01 * 255) * (0.01 * 255);
    constexpr double c2 = (0.03 * 255) * (0.03 * 255);
    const auto g = gaussian_window();
    const double sa = 255.0 / a.max_value();
    const double sb = 255.0 / b.max_value();
    const std::size_t n = static_cast<std::size_t>(h) * w;

    double total = 0;
    for (int c = 0; c < a.channels(); ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a.row(c, 0)[i] * sa;
            y[i] = b.row(c, 0)[i] * sb;
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, h, w, g);
        const auto my = filter_valid(y, h, w, g);
        const auto sxx = filter_valid(xx, h, w, g);
        const auto syy = filter_valid(yy, h, w, g);
        const auto sxy = filter_valid(xy, h, w, g);
        double acc = 0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double var_x = sxx[i] - mx[i] * mx[i];
            const double var_y = syy[i] - my[i] * my[i];
            const double cov = sxy[i] - mx[i] * my[i];
            acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                   ((mx[i] * mx[i] + my[i] * my[i] + c1) * (var_x + var_y + c2));
        }
        total += acc / static_cast<double>(mx.size());
    }
    return total / a.channels();
}

std::string format_metric(double value) {
    if (std::isinf(value) && value > 0) return "inf";
    std::ostringstream out;
    out << std::setprecision(10) << value;
    return out.str();
}

void MetricsReport::aggregate() {
    aggregates.clear();
    std::vector<std::size_t> counts;
    for (const auto& row : rows) {
        std::size_t i = 0;
        while (i < aggregates.size() && aggregates[i].method != row.method) ++i;
        if (i == aggregates.size()) {
            aggregates.push_back({"mean", row.method, 0.0, 0.0});
            counts.push_back(0);
        }
        aggregates[i].psnr_db += row.psnr_db;
        aggregates[i].ssim += row.ssim;
        ++counts[i];
    }
    for (std::size_t i = 0; i < aggregates.size(); ++i) {
        aggregates[i].psnr_db /= static_cast<double>(counts[i]);
        aggregates[i].ssim /= static_cast<double>(counts[i]);
    }
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out << "image,method,psnr_db,ssim\n";
    for (const auto* group : {&rows, &aggregates})
        for (const auto& r : *group)
            out << r.image << ',' << r.method << ',' << format_metric(r.psnr_db) << ','
                << format_metric(r.ssim) << '\n';
    return out.str();
}

void MetricsReport::write_csv(const fs::path& path) const {
    const std::string text = to_csv();
    write_atomically(path, [&](std::ostream& out) { out << text; });
}

const MetricsRow& MetricsReport::mean_for(const std::string& method) const {
    for (const auto& r : aggregates)
        if (r.method == method) return r;
    throw std::out_of_range("no aggregate for method " + method);
}

MetricsReport evaluate(const fs::path& outputs_dir, const fs::path& targets_dir,
                       const std::string& method) {
    const auto targets = list_images(targets_dir);
    if (targets.empty()) throw std::runtime_error("no images in " + targets_dir.string());
    std::string missing;
    for (const auto& t : targets)
        if (!fs::exists(outputs_dir / t.filename()))
            missing += (missing.empty() ? "" : ", ") + t.filename().string();
    if (!missing.empty())
        throw std::runtime_error("missing outputs in " + outputs_dir.string() + ": " + missing);

    MetricsReport report;
    for (const auto& t : targets) {
        const Frame target = read_image(t);
        const Frame output = read_image(outputs_dir / t.filename());
        report.rows.push_back({t.filename().string(), method, psnr(output, target), ssim(output, target)});
    }
    report.aggregate();
    return report;
}

}  // namespace din
