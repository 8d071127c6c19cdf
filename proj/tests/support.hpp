#pragma once

#include "din/frame.hpp"
#include "din/ops.hpp"
#include "din/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace din::test {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<T> values(shape.numel());
    for (auto& v : values) v = static_cast<T>(dist(rng));
    return Tensor<T>(shape, std::move(values), requires_grad);
}

inline Frame random_frame(int h, int w, int c, std::uint64_t seed, PixelRange range = PixelRange::unit) {
    std::mt19937_64 rng(seed);
    Frame f(h, w, c, range);
    // Multiples of 1/255 so that frames survive 8-bit I/O unchanged.
    std::uniform_int_distribution<int> dist(0, 255);
    for (auto& v : f.pixels())
        v = range == PixelRange::unit ? static_cast<float>(dist(rng)) / 255.0f : static_cast<float>(dist(rng));
    return f;
}

// An L1 distance to a target fixed on first use at least 0.5 away from every
// output element. Its gradient is a constant random +-1/count pattern, so a
// gradient check probes the op with a generic linear functional and never
// meets the kink of |.|.
template <typename T>
class Probe {
public:
    explicit Probe(std::uint64_t seed) : seed_(seed) {}

    Tensor<T> operator()(const Tensor<T>& output) {
        if (!target_.defined()) {
            std::mt19937_64 rng(seed_);
            std::uniform_real_distribution<double> mag(0.5, 1.5);
            std::bernoulli_distribution sign(0.5);
            std::vector<T> target(output.numel());
            const auto values = output.data();
            for (std::size_t i = 0; i < target.size(); ++i)
                target[i] = values[i] + static_cast<T>(sign(rng) ? mag(rng) : -mag(rng));
            target_ = Tensor<T>(output.shape(), std::move(target));
        }
        return l1_loss(output, target_);
    }

private:
    std::uint64_t seed_;
    Tensor<T> target_;
};

struct GradCheckReport {
    std::size_t checked = 0;
    std::size_t failures = 0;
    double worst_rel = 0;
    std::string first_failure;
};

// Central finite differences for every element of every leaf. A mismatch is
// |analytic - numeric| > max(atol, rtol * max(|analytic|, |numeric|)).
// `loss` must rebuild the graph from the leaves on every call.
inline GradCheckReport gradcheck(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> leaves,
                                 double step = 1e-5, double rtol = 1e-4, double atol = 1e-7) {
    for (auto& l : leaves) l.zero_grad();
    loss().backward();
    GradCheckReport report;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
        auto values = leaf.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = loss().item();
            values[i] = saved - step;
            const double down = loss().item();
            values[i] = saved;
            const double numeric = (up - down) / (2 * step);
            const double diff = std::abs(analytic[i] - numeric);
            const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
            ++report.checked;
            if (scale > 0) report.worst_rel = std::max(report.worst_rel, diff > atol ? diff / scale : 0.0);
            if (diff > std::max(atol, rtol * scale)) {
                if (report.failures++ == 0)
                    report.first_failure = "leaf " + std::to_string(li) + " element " + std::to_string(i) +
                                           ": analytic " + std::to_string(analytic[i]) + " numeric " +
                                           std::to_string(numeric);
            }
        }
    }
    return report;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("din_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace din::test
